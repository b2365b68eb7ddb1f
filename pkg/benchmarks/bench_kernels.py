"""Time each hot kernel under the numba and pure-numpy backends.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--replications 4096]

Numba kernels are warmed up once so compile time is excluded.  Outputs of
the two backends are compared before timing.
"""

import argparse
import time

import numpy as np

from spreadtime import _kernels
from spreadtime.chain import build_subgenerator
from spreadtime.model import homogeneous_spec, two_group_spec

TABLE1 = np.array([[7.17e-4, 3.72e-4], [3.72e-4, 1.93e-4]])


def bench(fn, args, warmup=1, repeat=5):
    for _ in range(warmup):
        fn(*args)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def cases(replications):
    spec = two_group_spec((50, 50), TABLE1, (1, 0))
    space, sub, init = build_subgenerator(spec, 0.9)
    v = np.array(init.weights)
    lam = float(np.max(-sub.diagonal))
    yield "power_sums (2484 states, 3000 terms)", "power_sums", (
        v, sub.diagonal, sub.successors, sub.rates, lam, 3000, 0.0)

    full_space, full, full_init = build_subgenerator(homogeneous_spec(100, 4.14e-4), target=100)
    levels = full_space.levels.astype(np.int64)
    yield "level_power_sums (N=100, 3000 terms)", "level_power_sums", (
        np.array(full_init.weights), full.diagonal, full.successors, full.rates,
        float(np.max(-full.diagonal)), 3000, levels, 100)

    b = np.ones(sub.dimension)
    yield "back_substitute (2484 states)", "back_substitute", (
        sub.diagonal, sub.successors, sub.rates, b, sub.level_starts)

    sums = np.exp(-np.arange(4000) / 500.0)
    yield "poisson_mix (200 times)", "poisson_mix", (sums, np.linspace(0, 3000, 200), 1e-12)

    steps = 90 - 1
    u = np.random.default_rng(0).random((replications, steps, 2))
    yield f"simulate_block ({replications} reps, Table 1)", "simulate_block", (
        u, spec.sizes.astype(float), np.asarray(spec.rates, dtype=float), spec.seeds.astype(float))


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--replications", type=int, default=4096)
    args = p.parse_args()
    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"{'kernel':44s} {'numpy (s)':>11s} {'numba (s)':>11s} {'speedup':>8s}")
    for label, name, fargs in cases(args.replications):
        ref = _kernels.NUMPY_KERNELS[name](*fargs)
        got = _kernels.NUMBA_KERNELS[name](*fargs)
        ref = ref[0] if isinstance(ref, tuple) else ref
        got = got[0] if isinstance(got, tuple) else got
        if not np.allclose(ref, got, rtol=1e-10, atol=1e-300):
            raise SystemExit(f"{name}: backends disagree")
        t_np = bench(_kernels.NUMPY_KERNELS[name], fargs, repeat=args.repeat)
        t_nb = bench(_kernels.NUMBA_KERNELS[name], fargs, repeat=args.repeat)
        print(f"{label:44s} {t_np:11.5f} {t_nb:11.5f} {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
