"""Network specification, validation and effective infection rates.

All rates are events per hour and all times are hours.  A ``NetworkSpec``
stores the K x K group rate matrix together with per-group size, seeds,
infectivity and susceptibility.  Its ``rates_kind`` records whether the
matrix holds raw meeting rates (``"base"``) or rates that already include
infectivity and susceptibility (``"effective"``); the Markov chain is always
built from :func:`transition_rates`, which applies the scaling exactly once.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from .errors import SpecValidationError

RATE_UNITS = "per_hour"


@dataclass(frozen=True)
class GroupProfile:
    size: int
    infectivity: float = 1.0
    susceptibility: float = 1.0
    seeds: int = 0


def as_rate_matrix(entries) -> np.ndarray:
    """Return a read-only float64 copy of a K x K rate matrix.

    Raises ``ValueError`` if the matrix is not square, is empty, contains
    negative or non-finite entries, or is identically zero.
    """
    mat = np.array(entries, dtype=np.float64)
    if mat.ndim == 0:
        mat = mat.reshape(1, 1)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or mat.shape[0] < 1:
        raise ValueError(f"rate matrix must be square with K >= 1, got shape {mat.shape}")
    if not np.all(np.isfinite(mat)):
        raise ValueError("rate matrix has non-finite entries")
    if np.any(mat < 0):
        raise ValueError("rate matrix has negative entries")
    if not np.any(mat > 0):
        raise ValueError("rate matrix has no positive entry")
    mat.setflags(write=False)
    return mat


@dataclass(frozen=True)
class NetworkSpec:
    groups: tuple
    rates: np.ndarray = field(repr=False)
    rates_kind: str = "base"

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))
        mat = np.array(self.rates, dtype=np.float64)
        if mat.ndim == 0:
            mat = mat.reshape(1, 1)
        mat.setflags(write=False)
        object.__setattr__(self, "rates", mat)
        if self.rates_kind not in ("base", "effective"):
            raise ValueError(f"rates_kind must be 'base' or 'effective', got {self.rates_kind!r}")

    @property
    def num_groups(self) -> int:
        return len(self.groups)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([g.size for g in self.groups], dtype=np.int64)

    @property
    def seeds(self) -> np.ndarray:
        return np.array([g.seeds for g in self.groups], dtype=np.int64)

    @property
    def population(self) -> int:
        return int(sum(g.size for g in self.groups))

    @property
    def total_seeds(self) -> int:
        return int(sum(g.seeds for g in self.groups))

    @property
    def infectivity(self) -> np.ndarray:
        return np.array([g.infectivity for g in self.groups], dtype=np.float64)

    @property
    def susceptibility(self) -> np.ndarray:
        return np.array([g.susceptibility for g in self.groups], dtype=np.float64)

    def with_seeds(self, seeds: Sequence[int]) -> "NetworkSpec":
        if len(seeds) != self.num_groups:
            raise ValueError("seed vector length must equal the number of groups")
        groups = tuple(replace(g, seeds=int(s)) for g, s in zip(self.groups, seeds))
        return replace(self, groups=groups)

    def with_sizes(self, sizes: Sequence[int]) -> "NetworkSpec":
        groups = tuple(replace(g, size=int(n)) for g, n in zip(self.groups, sizes))
        return replace(self, groups=groups)

    def with_rates(self, rates, rates_kind: str | None = None) -> "NetworkSpec":
        return replace(self, rates=np.array(rates, dtype=np.float64),
                       rates_kind=rates_kind or self.rates_kind)

    def scaled(self, gamma: float) -> "NetworkSpec":
        """Return a copy with every rate multiplied by ``gamma``."""
        if not gamma > 0:
            raise ValueError("scale factor must be positive")
        return self.with_rates(self.rates * gamma)

    def to_dict(self) -> dict:
        return {
            "groups": [
                {
                    "size": g.size,
                    "infectivity": g.infectivity,
                    "susceptibility": g.susceptibility,
                    "seeds": g.seeds,
                }
                for g in self.groups
            ],
            "rates": self.rates.tolist(),
            "rate_units": RATE_UNITS,
            "rates_kind": self.rates_kind,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, doc: dict) -> "NetworkSpec":
        units = doc.get("rate_units", RATE_UNITS)
        if units != RATE_UNITS:
            raise ValueError(f"unsupported rate_units {units!r}; expected {RATE_UNITS!r}")
        groups = tuple(
            GroupProfile(
                size=int(g["size"]),
                infectivity=float(g.get("infectivity", 1.0)),
                susceptibility=float(g.get("susceptibility", 1.0)),
                seeds=int(g.get("seeds", 0)),
            )
            for g in doc["groups"]
        )
        return cls(groups=groups, rates=doc["rates"], rates_kind=doc.get("rates_kind", "base"))

    @classmethod
    def from_json(cls, text: str) -> "NetworkSpec":
        return cls.from_dict(json.loads(text))


def homogeneous_spec(size: int, rate: float, seeds: int = 1) -> NetworkSpec:
    """Single-group network with ``size`` nodes and pairwise rate ``rate``."""
    return NetworkSpec(groups=(GroupProfile(size=size, seeds=seeds),), rates=[[rate]])


def two_group_spec(sizes, rates, seeds=(1, 0)) -> NetworkSpec:
    groups = tuple(GroupProfile(size=int(n), seeds=int(s)) for n, s in zip(sizes, seeds))
    return NetworkSpec(groups=groups, rates=rates)


def _check_probability(name: str, value: float) -> None:
    if not (0.0 < value <= 1.0):
        raise ValueError(f"{name} must lie in (0, 1], got {value}")


def effective_rate(meeting_rate: float, infectivity: float, susceptibility: float) -> float:
    """Infection rate of one infected/susceptible pair: meeting rate x phi x psi."""
    if meeting_rate < 0 or not math.isfinite(meeting_rate):
        raise ValueError(f"meeting rate must be finite and non-negative, got {meeting_rate}")
    _check_probability("infectivity", infectivity)
    _check_probability("susceptibility", susceptibility)
    return meeting_rate * infectivity * susceptibility


def effective_rates(spec: NetworkSpec) -> NetworkSpec:
    """Scale entry (k, l) of the base matrix by phi_k * psi_l."""
    require_valid(spec, reachability=False)
    if spec.rates_kind == "effective":
        return spec
    phi = spec.infectivity
    psi = spec.susceptibility
    eff = spec.rates * phi[:, None] * psi[None, :]
    return spec.with_rates(eff, rates_kind="effective")


def transition_rates(spec: NetworkSpec) -> np.ndarray:
    """Effective K x K matrix that drives the spreading chain."""
    if spec.rates_kind == "effective":
        return spec.rates
    return effective_rates(spec).rates


class Violation(NamedTuple):
    code: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {"ok": self.ok, "violations": [v._asdict() for v in self.violations]}


def validate_spec(spec: NetworkSpec, reachability: bool = True) -> ValidationReport:
    """Collect every invariant violation of ``spec`` without raising."""
    out = []
    k = spec.num_groups
    if k < 1:
        out.append(Violation("no_groups", "at least one group is required"))
    rates = np.asarray(spec.rates)
    if rates.ndim != 2 or rates.shape[0] != rates.shape[1]:
        out.append(Violation("rate_shape", f"rate matrix must be square, got shape {rates.shape}"))
    elif rates.shape[0] != k:
        out.append(Violation("rate_dimension",
                             f"rate matrix dimension {rates.shape[0]} != number of groups {k}"))
    else:
        if not np.all(np.isfinite(rates)):
            out.append(Violation("rate_nonfinite", "rate matrix has non-finite entries"))
        elif np.any(rates < 0):
            out.append(Violation("rate_negative", "rate matrix has negative entries"))
        elif not np.any(rates > 0):
            out.append(Violation("rate_all_zero", "rate matrix has no positive entry"))
    for idx, g in enumerate(spec.groups):
        if g.size < 1:
            out.append(Violation("group_size", f"group {idx}: size must be positive, got {g.size}"))
        if not (0.0 < g.infectivity <= 1.0):
            out.append(Violation("infectivity", f"group {idx}: infectivity {g.infectivity} not in (0, 1]"))
        if not (0.0 < g.susceptibility <= 1.0):
            out.append(Violation("susceptibility",
                                 f"group {idx}: susceptibility {g.susceptibility} not in (0, 1]"))
        if not (0 <= g.seeds <= g.size):
            out.append(Violation("seeds", f"group {idx}: seeds {g.seeds} not in [0, {g.size}]"))
    if spec.population < 2:
        out.append(Violation("population", f"total population must be >= 2, got {spec.population}"))
    if spec.total_seeds < 1:
        out.append(Violation("no_seeds", "at least one seed is required"))
    if reachability and not out:
        eff = transition_rates(spec)
        for idx, g in enumerate(spec.groups):
            if g.size > g.seeds and not np.any(eff[:, idx] > 0):
                out.append(Violation(
                    "degenerate_reachability",
                    f"group {idx} has no incoming infection rate; its susceptibles can never be infected",
                ))
    return ValidationReport(tuple(out))


def require_valid(spec: NetworkSpec, reachability: bool = True) -> NetworkSpec:
    report = validate_spec(spec, reachability=reachability)
    if not report.ok:
        raise SpecValidationError(report.violations)
    return spec


def average_rate(rates, sizes) -> float:
    """Mean pairwise rate over all ordered pairs of distinct nodes."""
    rates = np.asarray(rates, dtype=np.float64)
    n = np.asarray(sizes, dtype=np.float64)
    total = n.sum()
    # pairs (a, b), a != b: N_k N_l for k != l, N_k (N_k - 1) within a group
    pairs = np.outer(n, n) - np.diag(n)
    return float((pairs * rates).sum() / (total * (total - 1)))


def fair_rate_matrix(mean_rate: float, sizes, gamma1: float, gamma2: float) -> np.ndarray:
    """Two-group symmetric matrix with intra/inter ratios gamma1, gamma2 and a fixed mean.

    The inter-group rate is solved so that the average over ordered node pairs
    equals ``mean_rate``; intra-group rates are ``gamma * inter``.
    """
    n1, n2 = (int(x) for x in sizes)
    if n1 < 1 or n2 < 1:
        raise ValueError("both groups must be non-empty")
    if not mean_rate > 0:
        raise ValueError("mean rate must be positive")
    if gamma1 < 0 or gamma2 < 0:
        raise ValueError("gamma ratios must be non-negative")
    total = n1 + n2
    denom = n1 * (n1 - 1) * gamma1 + n2 * (n2 - 1) * gamma2 + 2 * n1 * n2
    if denom <= 0:
        raise ValueError("constraint cannot be solved for these sizes and ratios")
    inter = mean_rate * total * (total - 1) / denom
    mat = np.array([[gamma1 * inter, inter], [inter, gamma2 * inter]])
    mat.setflags(write=False)
    return mat


def special_case_rates(mean_rate: float, gamma: float) -> np.ndarray:
    """Two-group rates with inter-group rate at the midpoint of the intra rates."""
    if gamma < 1:
        raise ValueError(f"gamma must be >= 1, got {gamma}")
    if not mean_rate > 0:
        raise ValueError("mean rate must be positive")
    mat = np.array([
        [2.0 * gamma * mean_rate / (gamma + 1.0), mean_rate],
        [mean_rate, 2.0 * mean_rate / (gamma + 1.0)],
    ])
    mat.setflags(write=False)
    return mat
