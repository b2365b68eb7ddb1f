"""Monte Carlo oracle for the completion time.

The simulation works on group counts: in state ``i`` the holding time is
exponential with the total outflow and the next infected group is drawn in
proportion to its rate.  Replications are cut into fixed blocks of
``BLOCK`` and block ``b`` draws from ``Philox(key=rng_seed)`` jumped ``b``
times, so the output is bit-identical for any number of worker threads.
"""

from __future__ import annotations

import csv
import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import kolmogi

from . import _kernels
from .chain import alpha_count
from .errors import DegenerateReachability
from .model import NetworkSpec, require_valid, transition_rates

BLOCK = 1024
MODELS = ("cooperative", "non_cooperative")


@dataclass(frozen=True)
class SimConfig:
    replications: int = 10_000
    rng_seed: int = 0
    model: str = "cooperative"
    workers: int = 1

    def __post_init__(self):
        if int(self.replications) != self.replications or self.replications < 1:
            raise ValueError(f"replications must be a positive integer, got {self.replications}")
        if not 0 <= int(self.rng_seed) < 2 ** 64:
            raise ValueError("rng_seed must be a 64-bit unsigned integer")
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class SampleSet:
    samples: np.ndarray
    alpha: float
    fingerprint: str
    rng_seed: int = 0
    model: str = "cooperative"

    def __len__(self):
        return int(self.samples.shape[0])

    def sorted(self) -> np.ndarray:
        return np.sort(self.samples)

    def mean(self) -> float:
        return float(np.mean(self.samples))

    def variance(self) -> float:
        return float(np.var(self.samples, ddof=1)) if len(self) > 1 else 0.0

    def std_error(self) -> float:
        return float(np.sqrt(self.variance() / len(self)))

    def metadata(self) -> dict:
        return {
            "fingerprint": self.fingerprint,
            "rng_seed": int(self.rng_seed),
            "replications": len(self),
            "alpha": self.alpha,
            "model": self.model,
        }

    def to_csv(self, stream) -> None:
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(["completion_time_h"])
        for x in self.samples:
            w.writerow([repr(float(x))])

    def to_json(self) -> str:
        return json.dumps(self.metadata(), indent=2, sort_keys=True)


def spec_fingerprint(spec: NetworkSpec, alpha: float) -> str:
    doc = json.dumps({"spec": spec.to_dict(), "alpha": float(alpha)}, sort_keys=True)
    return hashlib.sha256(doc.encode()).hexdigest()


def _generator(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed)).jumped(block))


def _run_blocks(config: SimConfig, fn) -> np.ndarray:
    n = int(config.replications)
    blocks = [(b, min(BLOCK, n - b * BLOCK)) for b in range((n + BLOCK - 1) // BLOCK)]
    if config.workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            parts = list(pool.map(lambda bc: fn(*bc), blocks))
    else:
        parts = [fn(b, c) for b, c in blocks]
    return np.concatenate(parts)


def simulate_completion(spec: NetworkSpec, alpha: float, config: SimConfig = SimConfig()) -> SampleSet:
    """Independent draws of the alpha-completion time (hours)."""
    require_valid(spec)
    target = alpha_count(alpha, spec.population)
    fp = spec_fingerprint(spec, alpha)
    steps = target - spec.total_seeds
    if steps <= 0:
        return SampleSet(np.zeros(int(config.replications)), float(alpha), fp, config.rng_seed, "cooperative")
    sizes = spec.sizes.astype(np.float64)
    seeds = spec.seeds.astype(np.float64)
    rates = np.ascontiguousarray(transition_rates(spec), dtype=np.float64)

    def block(b, count):
        u = _generator(config.rng_seed, b).random((count, steps, 2))
        return _kernels.simulate_block(u, sizes, rates, seeds)

    with np.errstate(divide="ignore"):
        times = _run_blocks(config, block)
    if not np.all(np.isfinite(times)):
        raise DegenerateReachability("a replication reached a state with no outgoing infection rate")
    return SampleSet(times, float(alpha), fp, config.rng_seed, "cooperative")


def simulate_noncooperative(size: int, rate: float, config: SimConfig = SimConfig()) -> SampleSet:
    """Only the seed transmits: the time is a sum of Exp((N - i) lam), i = 1..N-1."""
    if size < 2:
        raise ValueError("population must be >= 2")
    if not rate > 0:
        raise ValueError("rate must be positive")
    stage = (size - np.arange(1, size, dtype=np.float64)) * rate

    def block(b, count):
        u = _generator(config.rng_seed, b).random((count, size - 1))
        return (-np.log1p(-u) / stage).sum(axis=1)

    times = _run_blocks(config, block)
    doc = json.dumps({"model": "non_cooperative", "size": int(size), "rate": float(rate)}, sort_keys=True)
    fp = hashlib.sha256(doc.encode()).hexdigest()
    return SampleSet(times, 1.0, fp, config.rng_seed, "non_cooperative")


def _values(samples) -> np.ndarray:
    x = np.asarray(samples.samples if isinstance(samples, SampleSet) else samples, dtype=np.float64)
    if x.size == 0:
        raise ValueError("sample set is empty")
    return x


def empirical_cdf(samples, t):
    """Fraction of samples ``<= t`` (right-continuous)."""
    x = np.sort(_values(samples))
    out = np.searchsorted(x, np.asarray(t, dtype=np.float64), side="right") / x.size
    return float(out) if np.ndim(out) == 0 else out


def _eval(cdf, x):
    try:
        y = np.asarray(cdf(x), dtype=np.float64)
        if y.shape == x.shape:
            return y
    except (TypeError, ValueError):
        pass
    return np.array([float(cdf(v)) for v in x])


def ks_distance(samples, cdf) -> float:
    """Two-sided Kolmogorov-Smirnov statistic against a cdf callable.

    Both step sides are checked at every distinct sample value, comparing the
    empirical left limit with the reference left limit.
    """
    x = np.sort(_values(samples))
    n = x.size
    u, counts = np.unique(x, return_counts=True)
    upper = np.cumsum(counts) / n
    lower = upper - counts / n
    f_at = _eval(cdf, u)
    f_left = _eval(cdf, np.nextafter(u, -np.inf))
    return float(max(np.max(np.abs(upper - f_at)), np.max(np.abs(lower - f_left))))


def ks_critical_value(n: int, level: float = 0.99) -> float:
    """Asymptotic KS critical value; 1.63/sqrt(n) at the 99% level."""
    return float(kolmogi(1.0 - level) / np.sqrt(n))
