"""Per-group node contribution: guaranteed time without one node over with it.

Both terms target the same absolute count ``ceil(alpha (N - 1))``, so the
ratio isolates the effect of the removed node's contacts.  Nodes within a
group are exchangeable, so a value per group is all there is.
"""

from __future__ import annotations

from dataclasses import replace

from .analysis import spread_distribution
from .chain import alpha_count
from .errors import TrivialCompletion
from .model import NetworkSpec, require_valid


def without_node(spec: NetworkSpec, group: int, remove_seed: bool = False) -> NetworkSpec:
    """Copy of ``spec`` with one node of ``group`` removed."""
    if not 0 <= group < spec.num_groups:
        raise ValueError(f"group index {group} out of range")
    g = spec.groups[group]
    if remove_seed:
        if g.seeds < 1:
            raise ValueError(f"group {group} has no seed to remove")
        new = replace(g, size=g.size - 1, seeds=g.seeds - 1)
    else:
        if g.size - 1 < g.seeds:
            raise ValueError(f"group {group} has no non-seed node to remove")
        new = replace(g, size=g.size - 1)
    groups = list(spec.groups)
    groups[group] = new
    return replace(spec, groups=tuple(groups))


def node_contribution(spec: NetworkSpec, group: int, alpha: float, beta: float,
                      remove_seed: bool = False) -> float:
    require_valid(spec)
    n = spec.population
    reduced = require_valid(without_node(spec, group, remove_seed))
    target = alpha_count(alpha, n - 1)
    # the full network at alpha (N-1)/N aims at the same count
    assert alpha_count(alpha * (n - 1) / n, n) == target
    num = spread_distribution(reduced, target=target)
    den = spread_distribution(spec, target=target)
    if num.is_trivial:
        raise TrivialCompletion(reduced.total_seeds, target)
    if den.is_trivial:
        raise TrivialCompletion(spec.total_seeds, target)
    return num.quantile(beta) / den.quantile(beta)


def contribution_table(spec: NetworkSpec, alpha: float, beta: float, remove_seed: bool = False) -> list:
    """``[(group, C)]`` for every group that has a removable node."""
    out = []
    for k, g in enumerate(spec.groups):
        if (g.seeds if remove_seed else g.size - g.seeds) < 1:
            continue
        out.append((k, node_contribution(spec, k, alpha, beta, remove_seed)))
    return out
