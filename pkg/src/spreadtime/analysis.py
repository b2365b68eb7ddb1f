"""Distribution of the alpha-completion time and the queries built on it.

``SpreadDistribution`` wraps the initial vector ``h`` and the subgenerator
``F`` of the truncated chain.  Survival ``h exp(F t) 1`` is evaluated by
uniformization: with ``P = I + F / L`` and ``L`` the largest outflow,

    survival(t) = sum_k Poisson(k; L t) * (h P^k 1).

The scalar sequence ``s_k = h P^k 1`` does not depend on ``t``, so it is
computed once, extended on demand, and reused by every CDF, quantile and KS
evaluation.  Moments use repeated back substitution with ``-F``.
"""

from __future__ import annotations

import math
import threading

import numpy as np
from scipy.special import gammaln

from . import _kernels
from .chain import InitialDistribution, Subgenerator, alpha_count, build_subgenerator
from .errors import Infeasible, NumericalFailure, TrivialCompletion
from .model import NetworkSpec, require_valid

DEFAULT_TOLERANCE = 1e-12
QUANTILE_RTOL = 1e-9


class SpreadDistribution:
    """Phase-type law of ``T_alpha`` given by ``(h, F)``.

    A distribution with zero transient states represents trivial completion
    (the seeds already meet the target): ``T_alpha = 0`` almost surely.
    Instances are logically immutable; the power-sum cache grows under a lock.
    """

    def __init__(self, initial: InitialDistribution | None, subgen: Subgenerator | None,
                 tolerance: float = DEFAULT_TOLERANCE, space=None):
        if not 0 < tolerance < 1:
            raise ValueError("tolerance must lie in (0, 1)")
        self.initial = initial
        self.subgen = subgen
        self.space = space
        self.tolerance = float(tolerance)
        if subgen is None or subgen.dimension == 0:
            self.uniformization_rate = 0.0
        else:
            self.uniformization_rate = float(np.max(-subgen.diagonal))
        self._lock = threading.Lock()
        self._sums = np.empty(0)
        self._vec = None if initial is None else np.array(initial.weights, dtype=np.float64)
        self._exhausted = False
        self._moments = {}

    @classmethod
    def trivial(cls) -> "SpreadDistribution":
        return cls(None, None)

    @property
    def is_trivial(self) -> bool:
        return self.subgen is None or self.subgen.dimension == 0

    # -- uniformization -------------------------------------------------

    def _power_sums_to(self, kmax: int) -> np.ndarray:
        with self._lock:
            have = self._sums.shape[0]
            if have > kmax or self._exhausted:
                return self._sums
            count = max(kmax + 1 - have, have, 64)
            sub = self.subgen
            floor = 1e-2 * self.tolerance
            more, vec = _kernels.power_sums(self._vec, sub.diagonal, sub.successors, sub.rates,
                                            self.uniformization_rate, count, floor)
            if more.shape[0] < count or (more.shape[0] and more[-1] < floor):
                self._exhausted = True
            self._sums = np.concatenate([self._sums, more])
            self._vec = vec
            return self._sums

    def survival(self, t):
        """``Pr{T_alpha > t}``; accepts a scalar or an array of times."""
        arr = np.asarray(t, dtype=np.float64)
        if np.any(arr < 0) or np.any(np.isnan(arr)):
            raise ValueError("time must be non-negative")
        flat = arr.ravel()
        if self.is_trivial:
            out = np.zeros(flat.shape)
        else:
            lam_t = self.uniformization_rate * flat
            _, hi = _kernels.poisson_window(float(lam_t.max(initial=0.0)), self.tolerance)
            sums = self._power_sums_to(hi)
            out = _kernels.poisson_mix(sums, lam_t, self.tolerance)
        out = np.clip(out, 0.0, 1.0).reshape(arr.shape)
        return float(out) if out.ndim == 0 else out

    def cdf(self, t):
        s = self.survival(t)
        return 1.0 - s

    # -- moments ----------------------------------------------------------

    def _solve_powers(self, n: int) -> list:
        """``[(-F)^{-1} 1, (-F)^{-2} 1, ...]`` up to power ``n``."""
        sub = self.subgen
        x = np.ones(sub.dimension)
        out = []
        for _ in range(n):
            x = _kernels.back_substitute(sub.diagonal, sub.successors, sub.rates, x, sub.level_starts)
            out.append(x)
        return out

    def moment(self, n: int) -> float:
        """Raw moment ``E[T^n] = n! h (-F)^{-n} 1``."""
        if int(n) != n or n < 1:
            raise ValueError(f"moment order must be a positive integer, got {n}")
        n = int(n)
        if self.is_trivial:
            return 0.0
        if n not in self._moments:
            h = self.initial.weights
            for j, x in enumerate(self._solve_powers(n), start=1):
                self._moments[j] = math.factorial(j) * float(h @ x)
        return self._moments[n]

    def mean(self) -> float:
        return self.moment(1)

    def variance(self) -> float:
        m1 = self.moment(1)
        return self.moment(2) - m1 * m1

    # -- quantiles ----------------------------------------------------------

    def quantile(self, beta: float, rtol: float = QUANTILE_RTOL) -> float:
        """Smallest ``t`` with ``cdf(t) >= beta`` (the guaranteed time)."""
        if not 0.0 < beta < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {beta}")
        if self.is_trivial:
            return 0.0
        start = self.mean()
        lo, hi = 0.0, start
        if self.cdf(hi) >= beta:
            lo = hi / 2.0
            for _ in range(2000):
                if self.cdf(lo) < beta:
                    break
                hi, lo = lo, lo / 2.0
            else:
                raise NumericalFailure("could not bracket the quantile from below")
        else:
            for _ in range(2000):
                lo, hi = hi, hi * 2.0
                if self.cdf(hi) >= beta:
                    break
            else:
                raise NumericalFailure("could not bracket the quantile from above")
        while hi - lo > rtol * hi:
            mid = 0.5 * (lo + hi)
            if self.cdf(mid) >= beta:
                hi = mid
            else:
                lo = mid
        return 0.5 * (lo + hi)

    def decay_rate(self) -> float:
        """Asymptotic tail rate: the smallest total outflow of a transient state."""
        if self.is_trivial:
            return math.inf
        return float(np.min(-self.subgen.diagonal))

    def scaled(self, gamma: float) -> "SpreadDistribution":
        """Law of the completion time after multiplying every rate by ``gamma``."""
        if self.is_trivial:
            return self
        return SpreadDistribution(self.initial, self.subgen.scaled(gamma), self.tolerance, self.space)


def spread_distribution(spec: NetworkSpec, alpha: float | None = None, target: int | None = None,
                        tolerance: float = DEFAULT_TOLERANCE) -> SpreadDistribution:
    """Build the completion-time law for ``spec``; trivial completion gives ``T = 0``."""
    require_valid(spec)
    try:
        space, sub, init = build_subgenerator(spec, alpha=alpha, target=target)
    except TrivialCompletion:
        return SpreadDistribution.trivial()
    return SpreadDistribution(init, sub, tolerance, space)


def cdf(dist: SpreadDistribution, t):
    return dist.cdf(t)


def survival(dist: SpreadDistribution, t):
    return dist.survival(t)


def guaranteed_time(dist: SpreadDistribution, beta: float) -> float:
    return dist.quantile(beta)


def moment(dist: SpreadDistribution, n: int) -> float:
    return dist.moment(n)


def ratio(dist: SpreadDistribution, beta: float) -> float:
    """Guaranteed time over mean time; 1 by convention for trivial completion."""
    if dist.is_trivial:
        if not 0.0 < beta < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {beta}")
        return 1.0
    return dist.quantile(beta) / dist.mean()


def decay_rate(dist: SpreadDistribution) -> float:
    return dist.decay_rate()


# ---------------------------------------------------------------------------
# expected number of infected nodes
# ---------------------------------------------------------------------------

def _level_masses(spec: NetworkSpec, times: np.ndarray, tolerance: float):
    """Probability mass on each total count ``|e| < N`` at each time."""
    space, sub, init = build_subgenerator(spec, target=spec.population)
    levels = space.levels.astype(np.int64)
    n = spec.population
    lam = float(np.max(-sub.diagonal))
    lam_t = lam * times
    _, hi = _kernels.poisson_window(float(lam_t.max(initial=0.0)), tolerance)
    table = _kernels.level_power_sums(np.array(init.weights), sub.diagonal, sub.successors, sub.rates,
                                      lam, hi + 1, levels, n)
    masses = np.zeros((len(times), n))
    for row, m in enumerate(lam_t):
        if m == 0.0:
            masses[row] = table[0]
            continue
        lo, top = _kernels.poisson_window(float(m), tolerance)
        k = np.arange(lo, top + 1)
        w = np.exp(k * math.log(m) - m - gammaln(k + 1.0))
        masses[row] = w @ table[lo:top + 1]
    return masses


def mean_infected(spec: NetworkSpec, t, tolerance: float = DEFAULT_TOLERANCE):
    """Expected infected count ``M(t) = sum_{i=1}^{N} Pr{T_{i/N} <= t}``.

    All targets share one chain run to full infection: ``Pr{T_{i/N} > t}``
    is the mass still on counts below ``i``.
    """
    require_valid(spec)
    arr = np.asarray(t, dtype=np.float64)
    if np.any(arr < 0):
        raise ValueError("time must be non-negative")
    flat = arr.ravel()
    n = spec.population
    if spec.total_seeds >= n:
        out = np.full(flat.shape, float(n))
    else:
        masses = _level_masses(spec, flat, tolerance)
        below = np.cumsum(masses, axis=1)  # below[:, i-1] = Pr{|I(t)| <= i-1}
        cdfs = 1.0 - below  # column i-1 -> Pr{T_{i/N} <= t}, i = 1..N
        out = np.clip(cdfs, 0.0, 1.0).sum(axis=1)
    out = out.reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


def spread_speed(spec: NetworkSpec, t, tolerance: float = DEFAULT_TOLERANCE):
    """Finite-difference derivative of :func:`mean_infected`.

    Step ``h = 1e-4 * max(t, 1)``; central difference where ``t >= h`` and a
    second-order one-sided stencil near zero.  Truncation error is O(h^2).
    """
    arr = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if np.any(arr < 0):
        raise ValueError("time must be non-negative")
    h = 1e-4 * np.maximum(arr, 1.0)
    central = arr >= h
    pts = np.concatenate([arr - h, arr + h, arr, arr + 2 * h])
    pts = np.maximum(pts, 0.0)
    m = np.asarray(mean_infected(spec, pts, tolerance)).reshape(4, -1)
    d_central = (m[1] - m[0]) / (2 * h)
    d_forward = (-3 * m[2] + 4 * m[1] - m[3]) / (2 * h)
    out = np.where(central, d_central, d_forward)
    return float(out[0]) if np.ndim(t) == 0 else out


# ---------------------------------------------------------------------------
# planning queries
# ---------------------------------------------------------------------------

def seed_vector(total: int, sizes, priority) -> tuple:
    seeds = [0] * len(sizes)
    left = total
    for g in priority:
        take = min(left, int(sizes[g]))
        seeds[g] = take
        left -= take
        if left == 0:
            break
    if left:
        raise ValueError(f"cannot place {total} seeds in groups {list(priority)}")
    return tuple(seeds)


def min_seeds_for_bound(spec: NetworkSpec, alpha: float, beta: float, t_bound: float,
                        priority=None) -> tuple:
    """Fewest seeds whose guaranteed time is within ``t_bound``.

    Seeds fill groups in ``priority`` order (required when K > 1).  Returns the
    per-group seed vector.  The search relies on the guaranteed time being
    non-increasing in the seed count, which is checked on every evaluated
    point.
    """
    if not t_bound > 0:
        raise ValueError("t_bound must be positive")
    if spec.num_groups > 1 and priority is None:
        raise ValueError("a group priority order is required for more than one group")
    priority = tuple(range(spec.num_groups)) if priority is None else tuple(priority)
    if sorted(priority) != list(range(spec.num_groups)):
        raise ValueError("priority must be a permutation of group indices")
    target = alpha_count(alpha, spec.population)
    top = target - 1
    if top < 1:
        raise Infeasible("target count below two leaves no room for non-trivial seeding")

    evaluated = {}

    def gtime(total):
        if total not in evaluated:
            seeds = seed_vector(total, spec.sizes, priority)
            dist = spread_distribution(spec.with_seeds(seeds), target=target)
            evaluated[total] = dist.quantile(beta)
        return evaluated[total]

    if gtime(top) > t_bound:
        raise Infeasible(f"even {top} seeds give a guaranteed time {gtime(top):.6g} > {t_bound}")
    lo, hi = 1, top
    if gtime(lo) <= t_bound:
        hi = lo
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if gtime(mid) <= t_bound:
            hi = mid
        else:
            lo = mid
    keys = sorted(evaluated)
    vals = [evaluated[k] for k in keys]
    if any(b > a * (1 + 1e-9) for a, b in zip(vals, vals[1:])):
        raise NumericalFailure("guaranteed time is not monotone in the seed count")
    return seed_vector(hi, spec.sizes, priority)


def rate_scale_for_bound(dist: SpreadDistribution, beta: float, t_bound: float) -> float:
    """Factor by which all rates must be scaled so the guaranteed time equals ``t_bound``.

    Exact because scaling every rate by ``g`` divides every quantile by ``g``.
    Returns 0 for trivial completion (no spreading is needed).
    """
    if not t_bound > 0:
        raise ValueError("t_bound must be positive")
    return dist.quantile(beta) / t_bound
