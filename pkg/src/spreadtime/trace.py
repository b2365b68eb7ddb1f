"""Contact traces: parsing, statistics, rate estimation and synthetic generation.

Times inside a trace are seconds; estimated rates are per hour.  A trace is a
list of ``ContactRecord`` intervals between unordered node pairs.
"""

from __future__ import annotations

import csv
import math
import warnings
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import NoFeasibleTransfer, TraceParseError
from .model import GroupProfile, NetworkSpec

HEADER = ("node_a", "node_b", "start_s", "end_s")
SECONDS_PER_HOUR = 3600.0


@dataclass(frozen=True, order=True)
class ContactRecord:
    start: float
    end: float
    node_a: str
    node_b: str

    def __post_init__(self):
        if self.node_a == self.node_b:
            raise ValueError(f"self contact for node {self.node_a!r}")
        if not (math.isfinite(self.start) and math.isfinite(self.end)):
            raise ValueError("contact times must be finite")
        if self.end < self.start:
            raise ValueError(f"contact ends before it starts ({self.start} > {self.end})")

    @property
    def pair(self) -> tuple:
        return (self.node_a, self.node_b) if self.node_a <= self.node_b else (self.node_b, self.node_a)

    @property
    def duration(self) -> float:
        return self.end - self.start


def _merge(records):
    """Merge overlapping intervals of the same pair, warning once per merge."""
    by_pair = defaultdict(list)
    for r in records:
        by_pair[r.pair].append(r)
    out = []
    merged = 0
    for pair, items in by_pair.items():
        items.sort()
        cur = items[0]
        for r in items[1:]:
            if r.start <= cur.end:
                cur = ContactRecord(cur.start, max(cur.end, r.end), cur.node_a, cur.node_b)
                merged += 1
            else:
                out.append(cur)
                cur = r
        out.append(cur)
    if merged:
        warnings.warn(f"merged {merged} overlapping duplicate contact interval(s)", stacklevel=3)
    out.sort()
    return out


def parse_trace(stream, delimiter: str = ",") -> list:
    """Read ``node_a,node_b,start_s,end_s`` rows; ``#`` lines and blanks are skipped."""
    records = []
    header_seen = False
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        cells = [c.strip() for c in next(csv.reader([line], delimiter=delimiter))]
        if not header_seen:
            if tuple(cells) != HEADER:
                raise TraceParseError(lineno, f"expected header {','.join(HEADER)}, got {line!r}")
            header_seen = True
            continue
        if len(cells) != 4:
            raise TraceParseError(lineno, f"expected 4 fields, got {len(cells)}")
        try:
            start, end = float(cells[2]), float(cells[3])
        except ValueError:
            raise TraceParseError(lineno, "start_s and end_s must be numbers") from None
        try:
            records.append(ContactRecord(start, end, cells[0], cells[1]))
        except ValueError as exc:
            raise TraceParseError(lineno, str(exc)) from None
    return _merge(records)


def export_trace(records, stream) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(HEADER)
    for r in records:
        w.writerow([r.node_a, r.node_b, repr(float(r.start)), repr(float(r.end))])


def parse_grouping(stream) -> dict:
    """Read a ``node,group`` CSV into a node -> group label map."""
    out = {}
    rows = (line for line in stream if line.strip() and not line.lstrip().startswith("#"))
    reader = csv.reader(rows)
    first = True
    for lineno, cells in enumerate(reader, start=1):
        cells = [c.strip() for c in cells]
        if first:
            first = False
            if cells == ["node", "group"]:
                continue
        if len(cells) != 2:
            raise TraceParseError(lineno, f"expected node,group; got {cells}")
        out[cells[0]] = cells[1]
    return out


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TraceStats:
    contact_counts: dict
    avg_neighbors: float
    durations: np.ndarray = field(repr=False)  # sorted, seconds
    intercontact_means: dict = field(repr=False)

    def duration_cdf(self, x):
        out = np.searchsorted(self.durations, np.asarray(x, dtype=float), side="right") / self.durations.size
        return float(out) if np.ndim(out) == 0 else out

    def fraction_at_least(self, x: float) -> float:
        """Share of contacts lasting ``>= x`` seconds."""
        n = self.durations.size
        return float(n - np.searchsorted(self.durations, x, side="left")) / n


def _neighbor_counts(records) -> np.ndarray:
    """Distinct simultaneous partners of each endpoint, one value per endpoint event.

    Events of each node are sorted by start; candidate partners of an event lie
    in a window found by binary search, then exact overlap tests and a
    distinct-partner count are applied over all windows at once.
    """
    names = {}
    for r in records:
        names.setdefault(r.node_a, len(names))
        names.setdefault(r.node_b, len(names))
    a = np.array([names[r.node_a] for r in records])
    b = np.array([names[r.node_b] for r in records])
    start = np.array([r.start for r in records])
    end = np.array([r.end for r in records])
    node = np.concatenate([a, b])
    partner = np.concatenate([b, a])
    s = np.concatenate([start, start])
    e = np.concatenate([end, end])
    order = np.lexsort((s, node))
    node, partner, s, e = node[order], partner[order], s[order], e[order]
    seg_start = np.searchsorted(node, node, side="left")
    seg_end = np.searchsorted(node, node, side="right")
    first = np.r_[0, np.flatnonzero(np.diff(node)) + 1]
    longest = np.maximum.reduceat(e - s, first)[np.cumsum(np.r_[0, np.diff(node) != 0])]
    # composite key keeps every node's events in its own sorted band
    base = s.min()
    span = (e.max() - base) + 2.0 * longest.max() + 1.0
    key = node * span + (s - base)
    lo = np.maximum(np.searchsorted(key, node * span + (s - longest - base), side="left") - 1, seg_start)
    hi = np.minimum(np.searchsorted(key, node * span + (e - base), side="right") + 1, seg_end)
    width = hi - lo
    i = np.repeat(np.arange(s.size), width)
    j = lo[i] + np.arange(width.sum()) - np.repeat(np.cumsum(width) - width, width)
    hit = (s[j] <= e[i]) & (e[j] >= s[i])
    i, j = i[hit], j[hit]
    pairs = np.unique(i * (partner.max() + 1) + partner[j])
    return np.bincount(pairs // (partner.max() + 1), minlength=s.size).astype(float)


def trace_stats(records) -> TraceStats:
    """Contact counts, event-weighted neighbor count, durations and mean gaps."""
    if not records:
        raise ValueError("trace is empty")
    counts = defaultdict(int)
    starts = defaultdict(list)
    for r in records:
        counts[r.node_a] += 1
        counts[r.node_b] += 1
        starts[r.pair].append(r.start)
    gaps = {}
    for pair in sorted(starts):
        s = starts[pair]
        if len(s) > 1:
            # mean of consecutive gaps telescopes to the span over the gap count
            gaps[pair] = (max(s) - min(s)) / (len(s) - 1)
    durations = np.sort(np.array([r.duration for r in records]))
    return TraceStats(dict(counts), float(np.mean(_neighbor_counts(records))), durations, gaps)


def expected_contacts_per_transfer(stats: TraceStats, transfer_time_s: float) -> float:
    """Mean number of contacts until one lasts ``transfer_time_s`` (geometric retries)."""
    if not transfer_time_s > 0:
        raise ValueError("transfer time must be positive")
    p = stats.fraction_at_least(transfer_time_s)
    if p == 0.0:
        raise NoFeasibleTransfer(f"no contact lasts {transfer_time_s} s or longer")
    return 1.0 / p


def susceptibility_from(avg_neighbors: float, expected_contacts: float) -> float:
    """psi = 1 / (neighbors x contacts per successful transfer), capped at 1."""
    if avg_neighbors < 1:
        raise ValueError(f"average neighbor count must be >= 1, got {avg_neighbors}")
    if expected_contacts < 1:
        raise ValueError(f"expected contacts must be >= 1, got {expected_contacts}")
    return min(1.0, 1.0 / (avg_neighbors * expected_contacts))


def susceptibility_estimate(stats: TraceStats, transfer_time_s: float) -> float:
    return susceptibility_from(stats.avg_neighbors, expected_contacts_per_transfer(stats, transfer_time_s))


def intercontact_stats(records, pair) -> tuple:
    """(mean gap in seconds, coefficient of variation, number of gaps) for one pair."""
    key = tuple(sorted(pair))
    s = np.sort([r.start for r in records if r.pair == key])
    if s.size < 2:
        raise ValueError(f"pair {key} needs at least 2 contacts, has {s.size}")
    gaps = np.diff(s)
    mean = float(gaps.mean())
    cv = float(gaps.std(ddof=1) / mean) if gaps.size > 1 and mean > 0 else 0.0
    return mean, cv, int(gaps.size)


# ---------------------------------------------------------------------------
# rate estimation
# ---------------------------------------------------------------------------

def _horizon_hours(horizon_s: float) -> float:
    if not horizon_s > 0:
        raise ValueError("horizon must be positive")
    return horizon_s / SECONDS_PER_HOUR


def pairwise_rates(records, horizon_s: float) -> dict:
    """Maximum-likelihood meeting rate (per hour) of every pair seen in the trace.

    Pairs absent from the result have rate 0.
    """
    hours = _horizon_hours(horizon_s)
    counts = defaultdict(int)
    for r in records:
        counts[r.pair] += 1
    return {pair: counts[pair] / hours for pair in sorted(counts)}


def group_rate_matrix(records, grouping: dict, horizon_s: float, order=None) -> np.ndarray:
    """Mean pairwise rate between groups over ordered pairs of distinct nodes.

    ``order`` fixes the group order (default: sorted labels).
    """
    hours = _horizon_hours(horizon_s)
    labels = sorted(set(grouping.values())) if order is None else list(order)
    index = {g: k for k, g in enumerate(labels)}
    sizes = np.zeros(len(labels))
    for node, g in grouping.items():
        if g not in index:
            raise ValueError(f"node {node!r} is in unknown group {g!r}")
        sizes[index[g]] += 1
    if np.any(sizes == 0):
        raise ValueError("every group needs at least one node")
    contacts = np.zeros((len(labels), len(labels)))
    for r in records:
        try:
            k, l = index[grouping[r.node_a]], index[grouping[r.node_b]]
        except KeyError as exc:
            raise ValueError(f"node {exc.args[0]!r} has no group") from None
        contacts[k, l] += 1
        contacts[l, k] += 1
    pairs = np.outer(sizes, sizes) - np.diag(sizes)
    with np.errstate(invalid="ignore", divide="ignore"):
        mat = np.where(pairs > 0, contacts / pairs, 0.0) / hours
    return mat


def estimate_spec(records, grouping: dict, horizon_s: float, transfer_time_s: float,
                  order=None, seeds=None) -> NetworkSpec:
    """Base rate matrix plus a trace-wide susceptibility; infectivity fixed at 1."""
    labels = sorted(set(grouping.values())) if order is None else list(order)
    rates = group_rate_matrix(records, grouping, horizon_s, labels)
    psi = susceptibility_estimate(trace_stats(records), transfer_time_s)
    sizes = [sum(1 for g in grouping.values() if g == lab) for lab in labels]
    seeds = [1] + [0] * (len(labels) - 1) if seeds is None else list(seeds)
    groups = tuple(GroupProfile(size=n, susceptibility=psi, seeds=s) for n, s in zip(sizes, seeds))
    return NetworkSpec(groups=groups, rates=rates, rates_kind="base")


# ---------------------------------------------------------------------------
# synthetic traces
# ---------------------------------------------------------------------------

def node_ids(spec: NetworkSpec) -> list:
    return [f"n{i}" for i in range(spec.population)]


def spec_grouping(spec: NetworkSpec) -> dict:
    """Node -> group index map matching :func:`generate_trace` node names."""
    out = {}
    i = 0
    for k, n in enumerate(spec.sizes):
        for _ in range(int(n)):
            out[f"n{i}"] = k
            i += 1
    return out


def generate_trace(spec: NetworkSpec, horizon_s: float, duration_mean_s: float = 90.0,
                   rng_seed: int = 0, duration_model: str = "exponential") -> list:
    """Poisson contacts for every node pair at its group-pair meeting rate.

    Durations are exponential (default) or fixed at ``duration_mean_s``.
    """
    hours = _horizon_hours(horizon_s)
    rates = np.asarray(spec.rates, dtype=float)
    if not np.allclose(rates, rates.T, rtol=1e-12, atol=0.0):
        raise ValueError("contact rates must be symmetric")
    if duration_model not in ("exponential", "fixed"):
        raise ValueError(f"unknown duration model {duration_model!r}")
    if not duration_mean_s > 0:
        raise ValueError("mean duration must be positive")
    rng = np.random.default_rng(rng_seed)
    group = np.repeat(np.arange(spec.num_groups), spec.sizes)
    a, b = np.triu_indices(spec.population, k=1)
    lam = rates[group[a], group[b]]
    n = rng.poisson(lam * hours)
    a, b = np.repeat(a, n), np.repeat(b, n)
    start = rng.uniform(0.0, horizon_s, size=a.size)
    if duration_model == "exponential":
        dur = rng.exponential(duration_mean_s, size=a.size)
    else:
        dur = np.full(a.size, float(duration_mean_s))
    order = np.lexsort((b, a, start))
    names = node_ids(spec)
    return [ContactRecord(float(start[i]), float(start[i] + dur[i]), names[a[i]], names[b[i]]) for i in order]


def calibrate_duration_mean(target_psi: float, transfer_time_s: float, avg_neighbors: float = 1.0) -> float:
    """Exponential mean duration giving ``psi = P(D >= T) / neighbors = target_psi``."""
    p = target_psi * avg_neighbors
    if not 0.0 < p < 1.0:
        raise ValueError(f"target psi x neighbors must lie in (0, 1), got {p}")
    return -transfer_time_s / math.log(p)
