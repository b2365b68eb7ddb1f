"""Hot numerical kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports and ``SPREADTIME_DISABLE_NUMBA``
is unset (or ``0``/``false``).  Both paths compute the same quantities from
the same inputs; results agree to rounding.

Chain layout shared by every kernel: transient states are numbered so that
successors always have a larger index.  ``succ`` is an ``(n, K)`` int64
array of successor indices, with ``n`` used as a sentinel for "no successor
inside the transient set"; ``rate`` holds the matching rates (0 for the
sentinel).  ``diag`` holds the (negative) diagonal of the subgenerator.
"""

import math
import os

import numpy as np
from scipy.special import gammaln

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

HAVE_NUMBA = numba is not None
DISABLED = os.environ.get("SPREADTIME_DISABLE_NUMBA", "0").strip().lower() in ("1", "true", "yes", "on")
USE_NUMBA = HAVE_NUMBA and not DISABLED


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


def poisson_window(mean, tol):
    """Index range [lo, hi] holding all but ``tol`` of a Poisson(mean) mass."""
    z = math.sqrt(2.0 * math.log(1.0 / tol)) + 1.0
    spread = z * math.sqrt(mean) + z * z + 10.0
    lo = max(0, int(math.floor(mean - spread)))
    hi = int(math.ceil(mean + spread))
    return lo, hi


# ---------------------------------------------------------------------------
# power sums: s_k = (h P^k) 1 with P = I + F / lam
# ---------------------------------------------------------------------------

def _power_sums_np(v, diag, succ, rate, lam, count, floor):
    n = v.shape[0]
    pdiag = 1.0 + diag / lam
    prate = rate / lam
    flat_succ = succ.ravel()
    sums = np.empty(count)
    v = v.copy()
    used = 0
    for k in range(count):
        total = v.sum()
        sums[k] = total
        used = k + 1
        if total < floor:
            break
        flow = (v[:, None] * prate).ravel()
        nxt = np.bincount(flat_succ, weights=flow, minlength=n + 1)[:n]
        nxt += v * pdiag
        v = nxt
    return sums[:used], v


def _power_sums_loop(v, diag, succ, rate, lam, count, floor):
    n = v.shape[0]
    width = succ.shape[1]
    sums = np.empty(count)
    cur = v.copy()
    nxt = np.empty(n)
    used = 0
    for k in range(count):
        total = 0.0
        for i in range(n):
            total += cur[i]
        sums[k] = total
        used = k + 1
        if total < floor:
            break
        for i in range(n):
            nxt[i] = cur[i] * (1.0 + diag[i] / lam)
        for i in range(n):
            vi = cur[i]
            if vi != 0.0:
                for c in range(width):
                    j = succ[i, c]
                    if j < n:
                        nxt[j] += vi * (rate[i, c] / lam)
        cur, nxt = nxt, cur
    return sums[:used], cur


# ---------------------------------------------------------------------------
# per-level power sums, used for the expected infected count
# ---------------------------------------------------------------------------

def _level_power_sums_np(v, diag, succ, rate, lam, count, level, nlevels):
    n = v.shape[0]
    pdiag = 1.0 + diag / lam
    prate = rate / lam
    flat_succ = succ.ravel()
    out = np.empty((count, nlevels))
    v = v.copy()
    for k in range(count):
        out[k] = np.bincount(level, weights=v, minlength=nlevels)
        flow = (v[:, None] * prate).ravel()
        nxt = np.bincount(flat_succ, weights=flow, minlength=n + 1)[:n]
        nxt += v * pdiag
        v = nxt
    return out


def _level_power_sums_loop(v, diag, succ, rate, lam, count, level, nlevels):
    n = v.shape[0]
    width = succ.shape[1]
    out = np.zeros((count, nlevels))
    cur = v.copy()
    nxt = np.empty(n)
    for k in range(count):
        for i in range(n):
            out[k, level[i]] += cur[i]
        for i in range(n):
            nxt[i] = cur[i] * (1.0 + diag[i] / lam)
        for i in range(n):
            vi = cur[i]
            if vi != 0.0:
                for c in range(width):
                    j = succ[i, c]
                    if j < n:
                        nxt[j] += vi * (rate[i, c] / lam)
        cur, nxt = nxt, cur
    return out


# ---------------------------------------------------------------------------
# Poisson mixing of power sums: survival(t) = sum_k pois(k; lam t) s_k
# ---------------------------------------------------------------------------

def _poisson_mix_np(sums, lam_t, tol):
    out = np.empty(lam_t.shape[0])
    nsum = sums.shape[0]
    for idx in range(lam_t.shape[0]):
        m = lam_t[idx]
        if m == 0.0:
            out[idx] = sums[0]
            continue
        lo, hi = poisson_window(m, tol)
        if lo >= nsum:
            out[idx] = 0.0
            continue
        hi = min(hi, nsum - 1)
        k = np.arange(lo, hi + 1)
        w = np.exp(k * math.log(m) - m - gammaln(k + 1.0))
        out[idx] = float(np.dot(w, sums[lo:hi + 1]))
    return out


def _poisson_mix_loop(sums, lam_t, tol):
    out = np.empty(lam_t.shape[0])
    nsum = sums.shape[0]
    z = math.sqrt(2.0 * math.log(1.0 / tol)) + 1.0
    for idx in range(lam_t.shape[0]):
        m = lam_t[idx]
        if m == 0.0:
            out[idx] = sums[0]
            continue
        spread = z * math.sqrt(m) + z * z + 10.0
        lo = max(0, int(math.floor(m - spread)))
        hi = int(math.ceil(m + spread))
        if lo >= nsum:
            out[idx] = 0.0
            continue
        if hi > nsum - 1:
            hi = nsum - 1
        logm = math.log(m)
        acc = 0.0
        for k in range(lo, hi + 1):
            acc += math.exp(k * logm - m - math.lgamma(k + 1.0)) * sums[k]
        out[idx] = acc
    return out


# ---------------------------------------------------------------------------
# back substitution: solve (-F) x = b for upper-triangular F
# ---------------------------------------------------------------------------

def _back_substitute_np(diag, succ, rate, b, level_starts):
    n = diag.shape[0]
    x = np.zeros(n + 1)
    # successors of a level all sit in the next level, so each level is one vector step
    for lv in range(len(level_starts) - 2, -1, -1):
        a, z = level_starts[lv], level_starts[lv + 1]
        acc = b[a:z] + (rate[a:z] * x[succ[a:z]]).sum(axis=1)
        x[a:z] = acc / (-diag[a:z])
    return x[:n]


def _back_substitute_loop(diag, succ, rate, b, level_starts):
    n = diag.shape[0]
    width = succ.shape[1]
    x = np.zeros(n)
    for i in range(n - 1, -1, -1):
        acc = b[i]
        for c in range(width):
            j = succ[i, c]
            if j < n:
                acc += rate[i, c] * x[j]
        x[i] = acc / (-diag[i])
    return x


# ---------------------------------------------------------------------------
# Monte Carlo: completion times for a block of replications
# ---------------------------------------------------------------------------

def _simulate_block_np(uniforms, sizes, rates, seeds):
    reps, steps, _ = uniforms.shape
    k = sizes.shape[0]
    state = np.tile(seeds.astype(np.float64), (reps, 1))
    times = np.zeros(reps)
    for step in range(steps):
        pressure = state @ rates
        group_rates = (sizes - state) * pressure
        total = group_rates.sum(axis=1)
        times += -np.log1p(-uniforms[:, step, 0]) / total
        if k == 1:
            state[:, 0] += 1.0
            continue
        cum = np.cumsum(group_rates, axis=1)
        pick = (cum <= (uniforms[:, step, 1] * total)[:, None]).sum(axis=1)
        pick = np.minimum(pick, k - 1)
        state[np.arange(reps), pick] += 1.0
    return times


def _simulate_block_loop(uniforms, sizes, rates, seeds):
    reps, steps, _ = uniforms.shape
    k = sizes.shape[0]
    times = np.zeros(reps)
    state = np.empty(k)
    group_rates = np.empty(k)
    for r in range(reps):
        for g in range(k):
            state[g] = seeds[g]
        t = 0.0
        for step in range(steps):
            total = 0.0
            for l in range(k):
                pressure = 0.0
                for g in range(k):
                    pressure += state[g] * rates[g, l]
                group_rates[l] = (sizes[l] - state[l]) * pressure
                total += group_rates[l]
            if total <= 0.0:
                t = math.inf
                break
            t += -math.log1p(-uniforms[r, step, 0]) / total
            if k == 1:
                state[0] += 1.0
                continue
            target = uniforms[r, step, 1] * total
            cum = 0.0
            pick = k - 1
            for l in range(k):
                cum += group_rates[l]
                if cum > target:
                    pick = l
                    break
            state[pick] += 1.0
        times[r] = t
    return times


NUMPY_KERNELS = {
    "power_sums": _power_sums_np,
    "level_power_sums": _level_power_sums_np,
    "poisson_mix": _poisson_mix_np,
    "back_substitute": _back_substitute_np,
    "simulate_block": _simulate_block_np,
}

if HAVE_NUMBA:
    _jit = numba.njit(cache=True, nogil=True)
    NUMBA_KERNELS = {
        "power_sums": _jit(_power_sums_loop),
        "level_power_sums": _jit(_level_power_sums_loop),
        "poisson_mix": _jit(_poisson_mix_loop),
        "back_substitute": _jit(_back_substitute_loop),
        "simulate_block": _jit(_simulate_block_loop),
    }
else:  # pragma: no cover
    NUMBA_KERNELS = {}

_ACTIVE = NUMBA_KERNELS if USE_NUMBA else NUMPY_KERNELS


def power_sums(v, diag, succ, rate, lam, count, floor):
    return _ACTIVE["power_sums"](v, diag, succ, rate, float(lam), int(count), float(floor))


def level_power_sums(v, diag, succ, rate, lam, count, level, nlevels):
    return _ACTIVE["level_power_sums"](v, diag, succ, rate, float(lam), int(count), level, int(nlevels))


def poisson_mix(sums, lam_t, tol):
    return _ACTIVE["poisson_mix"](sums, np.ascontiguousarray(lam_t, dtype=np.float64), float(tol))


def back_substitute(diag, succ, rate, b, level_starts):
    return _ACTIVE["back_substitute"](diag, succ, rate, np.ascontiguousarray(b, dtype=np.float64),
                                      level_starts)


def simulate_block(uniforms, sizes, rates, seeds):
    return _ACTIVE["simulate_block"](uniforms, sizes, rates, seeds)
