"""State space and subgenerator of the truncated spreading chain.

The chain tracks the vector of infected counts per group.  Counts only grow,
so ordering states by total count (ties broken lexicographically) makes the
subgenerator upper triangular: every transition goes to a strictly larger
index.  Truncation at the target count ``c = ceil(alpha * N)`` turns every
state with total ``c`` into an absorbing state; the subgenerator keeps only
the transient part plus an aggregated exit rate per row.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateReachability, TrivialCompletion
from .model import NetworkSpec, require_valid, transition_rates


def alpha_count(alpha: float, population: int) -> int:
    """Target infected count ``ceil(alpha * N)``, robust to float noise.

    ``alpha * N`` within 1e-9 (relative) of an integer is treated as that
    integer, so ``alpha = 0.95`` with ``N = 40`` gives 38 rather than 39.
    """
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    x = alpha * population
    r = round(x)
    if abs(x - r) <= 1e-9 * max(1.0, x):
        return max(1, int(r))
    return max(1, int(math.ceil(x)))


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Transient and absorbing states of the truncated chain.

    ``transient`` and ``absorbing`` are ``(n, K)`` / ``(m, K)`` integer arrays
    in chain order.  Ordinals run over transient states first, then absorbing.
    """

    sizes: np.ndarray
    seeds: np.ndarray
    alpha_count: int
    transient: np.ndarray
    absorbing: np.ndarray
    _index: dict = field(repr=False, default_factory=dict)

    def __post_init__(self):
        if not self._index:
            idx = {tuple(int(v) for v in row): i for i, row in enumerate(self.transient)}
            off = len(self.transient)
            idx.update({tuple(int(v) for v in row): off + i for i, row in enumerate(self.absorbing)})
            object.__setattr__(self, "_index", idx)
        for arr in (self.transient, self.absorbing, self.sizes, self.seeds):
            arr.setflags(write=False)

    @property
    def num_transient(self) -> int:
        return len(self.transient)

    @property
    def levels(self) -> np.ndarray:
        """Total infected count of each transient state."""
        return self.transient.sum(axis=1)

    def index(self, state) -> int:
        """Ordinal of ``state``; transient states come first."""
        return self._index[tuple(int(v) for v in state)]

    def __contains__(self, state) -> bool:
        return tuple(int(v) for v in state) in self._index

    def labels(self) -> list:
        return ["(" + ",".join(str(int(v)) for v in row) + ")" for row in self.transient]


@dataclass(frozen=True, eq=False)
class Subgenerator:
    """Sparse upper-triangular subgenerator ``F_alpha`` over transient states.

    ``successors[i, c]`` is the index of the c-th successor of row ``i`` (or
    ``dimension`` when that move leaves the transient set or has zero rate),
    ``rates[i, c]`` its rate.  ``exit`` is the total rate from row ``i`` into
    the absorbing set and ``diagonal = -(rates.sum(1) + exit)``.
    """

    diagonal: np.ndarray
    successors: np.ndarray
    rates: np.ndarray
    exit: np.ndarray
    level_starts: np.ndarray

    def __post_init__(self):
        for arr in (self.diagonal, self.successors, self.rates, self.exit, self.level_starts):
            arr.setflags(write=False)

    @property
    def dimension(self) -> int:
        return self.diagonal.shape[0]

    def off_diagonal(self, row: int) -> list:
        """``(successor, rate)`` pairs of one row."""
        n = self.dimension
        return [(int(j), float(r)) for j, r in zip(self.successors[row], self.rates[row]) if j < n]

    def to_dense(self) -> np.ndarray:
        n = self.dimension
        dense = np.zeros((n, n))
        dense[np.arange(n), np.arange(n)] = self.diagonal
        rows = np.repeat(np.arange(n), self.successors.shape[1])
        cols = self.successors.ravel()
        keep = cols < n
        np.add.at(dense, (rows[keep], cols[keep]), self.rates.ravel()[keep])
        return dense

    def row_residuals(self) -> np.ndarray:
        """Relative conservation error of each row (0 for an exact row)."""
        total = self.rates.sum(axis=1) + self.exit
        return np.abs(self.diagonal + total) / np.abs(self.diagonal)

    def scaled(self, gamma: float) -> "Subgenerator":
        return Subgenerator(self.diagonal * gamma, self.successors.copy(), self.rates * gamma,
                            self.exit * gamma, self.level_starts.copy())


@dataclass(frozen=True, eq=False)
class InitialDistribution:
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if np.any(w < 0) or not math.isclose(w.sum(), 1.0, rel_tol=0, abs_tol=1e-12):
            raise ValueError("initial weights must be a probability vector")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)


def _box_states(sizes, seeds, target):
    """All vectors seeds <= e <= sizes with sum(seeds) <= |e| <= target, in chain order."""
    span = sizes - seeds + 1
    grid = np.indices(tuple(int(s) for s in span)).reshape(len(span), -1).T + seeds
    total = grid.sum(axis=1)
    grid = grid[total <= target]
    total = total[total <= target]
    keys = tuple(grid[:, j] for j in range(grid.shape[1] - 1, -1, -1)) + (total,)
    order = np.lexsort(keys)
    return grid[order].astype(np.int64)


def enumerate_states(sizes, seeds, alpha: float) -> StateSpace:
    """Enumerate the truncated state space reachable by counting from ``seeds``.

    States with ``i_k < s_k`` in some group are excluded: counts never
    decrease, so those states carry no mass.
    """
    sizes = np.asarray(sizes, dtype=np.int64)
    seeds = np.asarray(seeds, dtype=np.int64)
    if sizes.shape != seeds.shape or sizes.ndim != 1:
        raise ValueError("sizes and seeds must be 1-d and of equal length")
    if np.any(seeds < 0) or np.any(seeds > sizes):
        raise ValueError("seeds must satisfy 0 <= s_k <= N_k")
    target = alpha_count(alpha, int(sizes.sum()))
    return _state_space(sizes, seeds, target)


def _state_space(sizes, seeds, target) -> StateSpace:
    if seeds.sum() >= target:
        raise TrivialCompletion(seeds.sum(), target)
    states = _box_states(sizes, seeds, target)
    total = states.sum(axis=1)
    return StateSpace(sizes=sizes.copy(), seeds=seeds.copy(), alpha_count=int(target),
                      transient=states[total < target], absorbing=states[total == target])


def transition_rate(state, to_group: int, spec: NetworkSpec) -> float:
    """Rate from ``state`` to ``state + e_l``: (N_l - i_l) * sum_k i_k * lam_{k,l}."""
    state = np.asarray(state, dtype=np.int64)
    sizes = spec.sizes
    if not 0 <= to_group < spec.num_groups:
        raise IndexError(f"group index {to_group} out of range")
    if np.any(state < 0) or np.any(state > sizes):
        raise ValueError(f"state {state.tolist()} outside 0 <= i <= N")
    if state[to_group] >= sizes[to_group]:
        raise ValueError(f"group {to_group} has no susceptible nodes in state {state.tolist()}")
    lam = transition_rates(spec)
    pressure = state.astype(np.float64) @ lam
    return float((sizes[to_group] - state[to_group]) * pressure[to_group])


def _assemble(states, sizes, seeds, lam, target):
    """Vectorised construction of successor arrays and rates for ``states``."""
    n, k = states.shape
    span = sizes - seeds + 1
    strides = np.ones(k, dtype=np.int64)
    for j in range(k - 2, -1, -1):
        strides[j] = strides[j + 1] * span[j + 1]
    total = states.sum(axis=1)
    transient = total < target
    ntr = int(transient.sum())
    lookup = np.full(int(np.prod(span)), -1, dtype=np.int64)
    flat = (states - seeds) @ strides
    lookup[flat[transient]] = np.arange(ntr)

    tr = states[transient]
    pressure = tr.astype(np.float64) @ lam
    group_rates = (sizes - tr) * pressure
    succ = np.full((ntr, k), ntr, dtype=np.int64)
    rates = np.zeros((ntr, k))
    exit_rate = np.zeros(ntr)
    tr_total = tr.sum(axis=1)
    for l in range(k):
        room = tr[:, l] < sizes[l]
        positive = room & (group_rates[:, l] > 0)
        to_abs = positive & (tr_total + 1 == target)
        inner = positive & ~to_abs
        flat_next = (tr[inner] - seeds) @ strides + strides[l]
        succ[inner, l] = lookup[flat_next]
        rates[inner, l] = group_rates[inner, l]
        exit_rate[to_abs] += group_rates[to_abs, l]
    return tr, succ, rates, exit_rate


def _reachable(succ, rates, ntr):
    seen = np.zeros(ntr, dtype=bool)
    seen[0] = True
    for i in range(ntr):
        if seen[i]:
            nxt = succ[i][(succ[i] < ntr) & (rates[i] > 0)]
            seen[nxt] = True
    return seen


def build_subgenerator(spec: NetworkSpec, alpha: float | None = None, target: int | None = None):
    """Build ``(StateSpace, Subgenerator, InitialDistribution)`` for ``T_alpha``.

    Either ``alpha`` or an explicit absolute ``target`` count may be given.
    States unreachable from the seed state under the given rates are pruned.
    Raises :class:`TrivialCompletion` when seeds already meet the target and
    :class:`DegenerateReachability` when a reachable transient state has no
    way out.
    """
    require_valid(spec, reachability=False)
    sizes = spec.sizes
    seeds = spec.seeds
    if target is None:
        if alpha is None:
            raise ValueError("either alpha or target is required")
        target = alpha_count(alpha, spec.population)
    target = int(target)
    if not 1 <= target <= spec.population:
        raise ValueError(f"target count {target} outside [1, {spec.population}]")
    space = _state_space(sizes, seeds, target)
    lam = np.asarray(transition_rates(spec), dtype=np.float64)

    states = np.concatenate([space.transient, space.absorbing])
    tr, succ, rates, exit_rate = _assemble(states, sizes, seeds, lam, target)
    ntr = len(tr)

    seen = _reachable(succ, rates, ntr)
    if not seen.all():
        # drop transient states the rates never reach, and absorbing states fed only by them
        kept = tr[seen]
        pressure = kept.astype(np.float64) @ lam
        hit = set()
        for l in range(len(sizes)):
            enter = (kept.sum(axis=1) + 1 == target) & (kept[:, l] < sizes[l]) & \
                ((sizes[l] - kept[:, l]) * pressure[:, l] > 0)
            for row in kept[enter]:
                row = row.copy()
                row[l] += 1
                hit.add(space.index(row) - ntr)
        keep_abs = np.zeros(len(space.absorbing), dtype=bool)
        keep_abs[list(hit)] = True
        space = StateSpace(sizes=sizes.copy(), seeds=seeds.copy(), alpha_count=target,
                           transient=kept, absorbing=space.absorbing[keep_abs])
        states = np.concatenate([space.transient, space.absorbing])
        tr, succ, rates, exit_rate = _assemble(states, sizes, seeds, lam, target)
        ntr = len(tr)

    diag = -(rates.sum(axis=1) + exit_rate)
    stuck = np.flatnonzero(diag >= 0)
    if stuck.size:
        bad = space.transient[stuck[0]].tolist()
        raise DegenerateReachability(f"transient state {bad} has zero total outflow")
    levels = space.levels
    level_starts = np.flatnonzero(np.r_[True, levels[1:] != levels[:-1], True]).astype(np.int64)
    level_starts[-1] = ntr
    sub = Subgenerator(diagonal=diag, successors=succ, rates=rates, exit=exit_rate,
                       level_starts=level_starts)
    weights = np.zeros(ntr)
    weights[0] = 1.0
    return space, sub, InitialDistribution(weights)


def explicit_subgenerator_k1(size: int, seed_count: int, rate: float, alpha: float) -> Subgenerator:
    """Birth-chain subgenerator for one group, written out directly.

    State ``i`` (infected count) leaves at rate ``(N - i) * (i * lam)``.
    """
    target = alpha_count(alpha, size)
    if seed_count >= target:
        raise TrivialCompletion(seed_count, target)
    if seed_count < 1:
        raise ValueError("at least one seed is required")
    i = np.arange(seed_count, target, dtype=np.int64)
    n = len(i)
    out = (size - i) * (i.astype(np.float64) * rate)
    succ = np.where(i + 1 < target, np.arange(1, n + 1), n).reshape(n, 1).astype(np.int64)
    rates = np.where(i + 1 < target, out, 0.0).reshape(n, 1)
    exit_rate = np.where(i + 1 < target, 0.0, out)
    diag = -(rates.sum(axis=1) + exit_rate)
    return Subgenerator(diagonal=diag, successors=succ, rates=rates, exit=exit_rate,
                        level_starts=np.arange(n + 1, dtype=np.int64))


def absorption_certain(sub: Subgenerator) -> bool:
    """True when every transient row has a rate-positive path to absorption."""
    n = sub.dimension
    hits = sub.exit > 0
    for i in range(n - 1, -1, -1):
        if hits[i]:
            continue
        nxt = sub.successors[i]
        nxt = nxt[(nxt < n)]
        hits[i] = bool(np.any(hits[nxt]))
    return bool(hits.all())


def export_triplets(space: StateSpace, sub: Subgenerator, stream) -> None:
    """Write the subgenerator as ``row,col,rate`` lines under a JSON header.

    The header line starts with ``#``.  Exit rates use column ``dimension``,
    standing for the aggregated absorbing set.
    """
    n = sub.dimension
    header = {
        "dimension": n,
        "alpha_count": space.alpha_count,
        "exit_column": n,
        "states": space.labels(),
    }
    stream.write("# " + json.dumps(header) + "\n")
    stream.write("row,col,rate\n")
    for i in range(n):
        stream.write(f"{i},{i},{float(sub.diagonal[i])!r}\n")
        for j, r in sub.off_diagonal(i):
            stream.write(f"{i},{j},{r!r}\n")
        if sub.exit[i] > 0:
            stream.write(f"{i},{n},{float(sub.exit[i])!r}\n")


def read_triplets(stream):
    """Inverse of :func:`export_triplets`: returns ``(header, dense F, exit)``."""
    first = stream.readline()
    if not first.startswith("#"):
        raise ValueError("missing JSON header line")
    header = json.loads(first[1:])
    n = header["dimension"]
    dense = np.zeros((n, n))
    exit_rate = np.zeros(n)
    columns = stream.readline().strip()
    if columns != "row,col,rate":
        raise ValueError(f"unexpected column line {columns!r}")
    for line in stream:
        if not line.strip():
            continue
        i, j, r = line.split(",")
        i, j, r = int(i), int(j), float(r)
        if j == n:
            exit_rate[i] = r
        else:
            dense[i, j] = r
    return header, dense, exit_rate
