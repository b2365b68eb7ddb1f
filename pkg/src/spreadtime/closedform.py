"""Closed forms for the single-group chain and the non-cooperative baseline.

These are independent of the matrix method and serve as oracles for it.
Stage ``i`` of the homogeneous chain (``i`` infected) is exponential with
rate ``i (N - i) lam``, so ``T_alpha`` is a sum of independent exponentials.
"""

import math

import numpy as np
from scipy.special import comb

from .chain import alpha_count
from .errors import InfiniteMoment, NearDegenerateRates

ALTERNATING_MAX_STAGES = 12
DISTINCT_GAP = 1e-9
EPS = np.finfo(float).eps


def _check_k1(size, seeds, rate):
    if size < 2:
        raise ValueError(f"population must be >= 2, got {size}")
    if not 1 <= seeds <= size:
        raise ValueError(f"seeds must lie in [1, {size}], got {seeds}")
    if not rate > 0:
        raise ValueError(f"rate must be positive, got {rate}")


def stage_rates(size: int, seeds: int, rate: float, alpha: float = 1.0) -> np.ndarray:
    """Exit rates ``i (N - i) lam`` for ``i = s .. ceil(alpha N) - 1`` (empty if trivial)."""
    _check_k1(size, seeds, rate)
    target = alpha_count(alpha, size)
    i = np.arange(seeds, target, dtype=np.float64)
    return (size - i) * (i * rate)


def homog_mean_completion(size: int, seeds: int, rate: float, alpha: float = 1.0) -> float:
    return float(np.sum(1.0 / stage_rates(size, seeds, rate, alpha)))


def homog_variance(size: int, seeds: int, rate: float, alpha: float = 1.0) -> float:
    return float(np.sum(1.0 / stage_rates(size, seeds, rate, alpha) ** 2))


def homog_cumulant(size: int, seeds: int, rate: float, alpha: float = 1.0, order: int = 3) -> float:
    """``order``-th cumulant: sum over stages of (order-1)! / r_i^order."""
    r = stage_rates(size, seeds, rate, alpha)
    return float(math.factorial(order - 1) * np.sum(r ** (-float(order))))


def homog_raw_moments(size: int, seeds: int, rate: float, alpha: float = 1.0, nmax: int = 3) -> np.ndarray:
    """Raw moments ``E[T^n]``, n = 1..nmax, from the cumulants of the stage sum."""
    kappa = [0.0] + [homog_cumulant(size, seeds, rate, alpha, k) for k in range(1, nmax + 1)]
    mu = [1.0]
    for n in range(1, nmax + 1):
        mu.append(sum(comb(n - 1, j - 1, exact=True) * kappa[j] * mu[n - j] for j in range(1, n + 1)))
    return np.array(mu[1:])


def hypoexp_ccdf(n: int, eta: float, z):
    """Survival of ``sum_{i=1}^{n} Exp(eta i)``, which is the max of n iid Exp(eta).

    Small ``n`` uses the alternating binomial sum, whose rounding error is
    about ``eps * C(n, n/2)``; larger ``n`` uses the product form
    ``1 - (1 - e^{-eta z})^n`` evaluated via expm1/log1p.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"stage count must be a positive integer, got {n}")
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    z = np.asarray(z, dtype=np.float64)
    if np.any(z < 0):
        raise ValueError("z must be non-negative")
    n = int(n)
    if n <= ALTERNATING_MAX_STAGES:
        i = np.arange(1, n + 1)
        coef = (-1.0) ** (i - 1) * comb(n, i)
        out = np.exp(-eta * np.multiply.outer(z, i)) @ coef
    else:
        x = np.exp(-eta * z)
        with np.errstate(divide="ignore"):
            out = -np.expm1(n * np.log1p(-x))
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def generalized_erlang_ccdf(rates, z, max_error: float = 1e-9):
    """Survival of a sum of independent exponentials with pairwise distinct rates.

    The alternating sum cancels badly when rates cluster.  A first-order
    rounding bound is computed alongside; if it exceeds ``max_error`` (or two
    rates are closer than ``DISTINCT_GAP``) ``NearDegenerateRates`` is raised.
    """
    r = np.asarray(rates, dtype=np.float64).ravel()
    if r.size == 0 or np.any(r <= 0):
        raise ValueError("rates must be a non-empty list of positive values")
    z = np.asarray(z, dtype=np.float64)
    if np.any(z < 0):
        raise ValueError("z must be non-negative")
    srt = np.sort(r)
    if r.size > 1 and np.any(np.diff(srt) <= DISTINCT_GAP * srt[1:]):
        raise NearDegenerateRates("stage rates are not pairwise distinct; use the matrix method")
    diff = r[None, :] - r[:, None]  # diff[i, j] = r_j - r_i
    np.fill_diagonal(diff, 1.0)
    ratio = r[None, :] / diff
    np.fill_diagonal(ratio, 1.0)
    coef = np.prod(ratio, axis=1)
    terms = np.exp(-np.multiply.outer(z, r))
    # first-order rounding bound: coefficient error grows with sum_j r_j / |r_j - r_i|
    amp = np.abs(ratio).sum(axis=1) - 1.0
    bound = EPS * (np.abs(terms * coef) @ (amp + r.size + 1.0) + np.abs(terms * coef * r) @ np.ones(r.size) * z)
    if np.any(bound > max_error):
        raise NearDegenerateRates(
            f"alternating sum loses accuracy (error bound {float(np.max(bound)):.3g}); use the matrix method")
    out = np.clip(terms @ coef, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def guaranteed_time_bounds(size: int, rate: float, beta: float) -> tuple:
    """Asymptotic bracket ``(t_upper / 4, t_upper)`` for single-seed full completion.

    ``t_upper = 4 / (lam N) * (log(N - 1) - log log(1 / beta))``; valid only
    for large N.
    """
    if size < 3:
        raise ValueError("bounds need N >= 3")
    if not rate > 0:
        raise ValueError("rate must be positive")
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta must lie in (0, 1), got {beta}")
    upper = 4.0 / (rate * size) * (math.log(size - 1) - math.log(math.log(1.0 / beta)))
    return upper / 4.0, upper


# ---------------------------------------------------------------------------
# non-cooperative baseline: only the seed transmits
# ---------------------------------------------------------------------------

def _check_noncoop(size, rate):
    if size < 2:
        raise ValueError(f"population must be >= 2, got {size}")
    if not rate > 0:
        raise ValueError("rate must be positive")


def noncoop_mean(size: int, rate: float) -> float:
    _check_noncoop(size, rate)
    i = np.arange(1, size, dtype=np.float64)
    return float(np.sum(1.0 / i) / rate)


def noncoop_variance(size: int, rate: float) -> float:
    """Partial sum of ``1/i^2`` over ``lam^2``; increases to zeta(2)/lam^2."""
    _check_noncoop(size, rate)
    i = np.arange(1, size, dtype=np.float64)
    return float(np.sum(1.0 / i ** 2) / rate ** 2)


def noncoop_ccdf(size: int, rate: float, t):
    _check_noncoop(size, rate)
    return hypoexp_ccdf(size - 1, rate, t)


def noncoop_moment(size, rate: float, n: int) -> float:
    """Raw moment of the non-cooperative time; diverges in the unbounded-population limit."""
    if n < 1:
        raise ValueError("moment order must be >= 1")
    if size == math.inf:
        raise InfiniteMoment("non-cooperative moments diverge as the population grows without bound")
    _check_noncoop(size, rate)
    i = np.arange(1, size, dtype=np.float64)
    r = rate * i
    kappa = [0.0] + [math.factorial(k - 1) * float(np.sum(r ** (-float(k)))) for k in range(1, n + 1)]
    mu = [1.0]
    for m in range(1, n + 1):
        mu.append(sum(comb(m - 1, j - 1, exact=True) * kappa[j] * mu[m - j] for j in range(1, m + 1)))
    return mu[n]
