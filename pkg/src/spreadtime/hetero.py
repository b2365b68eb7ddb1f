"""Two equal-size communities: acceleration region and asymptotic decay rate.

With group sizes ``N/2`` each and a single seed in group 1, the tail rate of
``T_alpha`` is the smallest outflow over transient states,
``D = -max rho(i1, i2)``, where ``rho`` is minus the total outflow of state
``(i1, i2)``.  Over the feasible polygon ``1 <= i1 <= N/2``,
``0 <= i2 <= N/2``, ``i1 + i2 <= ceil(alpha N) - 1`` the maximum of ``rho``
sits on a vertex, so only the vertices need to be evaluated.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .analysis import spread_distribution
from .chain import alpha_count
from .model import fair_rate_matrix, homogeneous_spec, special_case_rates, two_group_spec

MEMBERSHIP_RTOL = 1e-9


@dataclass(frozen=True)
class GammaGrid:
    gamma1_values: np.ndarray
    gamma2_values: np.ndarray
    delta: np.ndarray  # heterogeneous G minus homogeneous G, indexed [i1, i2]
    membership: np.ndarray
    baseline: float
    alpha: float
    beta: float

    def rows(self):
        for a, g1 in enumerate(self.gamma1_values):
            for b, g2 in enumerate(self.gamma2_values):
                yield float(g1), float(g2), float(self.delta[a, b]), bool(self.membership[a, b])

    def to_csv(self, stream) -> None:
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(["gamma1", "gamma2", "delta_G", "member"])
        for g1, g2, d, m in self.rows():
            w.writerow([repr(g1), repr(g2), repr(d), int(m)])


def _check_even(size: int) -> int:
    if int(size) != size or size < 2 or size % 2:
        raise ValueError(f"population must be a positive even integer, got {size}")
    return int(size)


def _guaranteed(spec, alpha, beta) -> float:
    return spread_distribution(spec, alpha).quantile(beta)


def gamma_region(mean_rate: float, size: int, alpha: float, beta: float,
                 gamma1_values=None, gamma2_values=None, workers: int | None = None) -> GammaGrid:
    """Cells where heterogeneous rates give a strictly smaller guaranteed time.

    Each cell uses ``fair_rate_matrix`` so every grid point has the same mean
    pairwise rate as the homogeneous baseline.  ``workers`` > 1 evaluates
    cells on a thread pool; the result does not depend on it.
    """
    size = _check_even(size)
    half = size // 2
    g1 = np.linspace(0.0, 20.0, 41) if gamma1_values is None else np.asarray(gamma1_values, dtype=float)
    g2 = np.linspace(0.0, 20.0, 41) if gamma2_values is None else np.asarray(gamma2_values, dtype=float)
    base = _guaranteed(homogeneous_spec(size, mean_rate, 1), alpha, beta)

    def cell(pair):
        a, b = pair
        rates = fair_rate_matrix(mean_rate, (half, half), a, b)
        return _guaranteed(two_group_spec((half, half), rates, (1, 0)), alpha, beta)

    cells = [(a, b) for a in g1 for b in g2]
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(cell, cells))
    else:
        values = [cell(c) for c in cells]
    g = np.array(values).reshape(len(g1), len(g2))
    delta = g - base
    member = delta < -MEMBERSHIP_RTOL * base
    return GammaGrid(g1, g2, delta, member, base, float(alpha), float(beta))


def threshold_gamma(size: int) -> float:
    if size <= 4:
        raise ValueError(f"threshold needs N > 4, got {size}")
    return (5.0 * size - 16.0) / (size - 4.0)


def _check_vertex_args(size, gamma, alpha):
    size = _check_even(size)
    if gamma < 1:
        raise ValueError(f"gamma must be >= 1, got {gamma}")
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    return size


def vertex_rho(size: int, mean_rate: float, gamma: float, alpha: float) -> tuple:
    """``(rho(1, 0), rho(N/2, M - N/2))`` with ``M = ceil(alpha N) - 1``.

    The second value is ``None`` when ``M < N/2`` (that vertex does not exist).
    """
    size = _check_vertex_args(size, gamma, alpha)
    lam = mean_rate
    m = alpha_count(alpha, size) - 1
    corner = -(size - 2) * gamma * lam / (gamma + 1.0) - size * lam / 2.0
    if m < size // 2:
        return corner, None
    edge = -(size - m) * (size * lam / 2.0 + (m - size / 2.0) * 2.0 * lam / (gamma + 1.0))
    return corner, edge


def outflow(state, sizes, rates) -> float:
    """Total rate out of ``state`` (``-rho``)."""
    i = np.asarray(state, dtype=np.float64)
    n = np.asarray(sizes, dtype=np.float64)
    return float(np.sum((n - i) * (i @ np.asarray(rates))))


def polygon_vertices(size: int, alpha: float) -> list:
    """Integer vertices of the feasible region of transient states."""
    half = size // 2
    m = alpha_count(alpha, size) - 1
    out = {(1, 0), (min(half, m), 0), (1, min(half, m - 1))}
    if m >= half:
        out.add((half, m - half))
    if m - half >= 1:
        out.add((m - half, half))
    return sorted(out)


def decay_rate_theorem3(size: int, mean_rate: float, gamma: float, alpha: float) -> float:
    """Tail decay rate for the special-case rates, maximizing rho over the vertices."""
    size = _check_vertex_args(size, gamma, alpha)
    half = size // 2
    rates = special_case_rates(mean_rate, gamma)
    return min(outflow(v, (half, half), rates) for v in polygon_vertices(size, alpha))


def decay_rate_case_table(size: int, mean_rate: float, gamma: float, alpha: float) -> float:
    """Decay rate read from the case analysis on ``ceil(alpha N)``.

    Covers ``ceil(alpha N) <= N - 2`` (corner), ``= N`` (edge) and ``= N - 1``
    (whichever vertex wins, switching at ``threshold_gamma``).
    """
    corner, edge = vertex_rho(size, mean_rate, gamma, alpha)
    target = alpha_count(alpha, size)
    if target <= size - 2:
        return -corner
    if target == size:
        return -edge
    if gamma < threshold_gamma(size):
        return -corner
    return -edge


def fig6_curves(size: int = 40, mean_rate: float = 1.0, gammas=(1, 2, 4, 8),
                alphas=None, beta: float = 0.9) -> dict:
    """Guaranteed time versus alpha for special-case rates, one curve per gamma."""
    size = _check_even(size)
    half = size // 2
    alphas = np.round(np.arange(1, 11) / 10.0, 10) if alphas is None else np.asarray(alphas, dtype=float)
    out = {}
    for gamma in gammas:
        spec = two_group_spec((half, half), special_case_rates(mean_rate, gamma), (1, 0))
        out[float(gamma)] = np.array([_guaranteed(spec, a, beta) for a in alphas])
    return {"alpha": alphas, "curves": out}


def derivative_sign_change(size: int, mean_rate: float, alpha: float, gammas) -> float | None:
    """First gamma interval where the finite-difference slope of D changes sign (midpoint)."""
    g = np.asarray(gammas, dtype=float)
    d = np.array([decay_rate_theorem3(size, mean_rate, x, alpha) for x in g])
    slope = np.diff(d) / np.diff(g)
    sign = np.sign(slope)
    for k in range(len(sign) - 1):
        if sign[k] != 0 and sign[k + 1] != 0 and sign[k] != sign[k + 1]:
            return float(g[k + 1])
    return None
