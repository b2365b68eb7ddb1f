"""Exact spread-time distributions for SI spreading in multi-group opportunistic networks."""

__version__ = "0.1.0"

from .analysis import (
    SpreadDistribution,
    cdf,
    decay_rate,
    guaranteed_time,
    mean_infected,
    min_seeds_for_bound,
    moment,
    rate_scale_for_bound,
    ratio,
    spread_distribution,
    spread_speed,
    survival,
)
from .chain import build_subgenerator, enumerate_states, explicit_subgenerator_k1
from .errors import (
    DegenerateReachability,
    Infeasible,
    InfiniteMoment,
    NearDegenerateRates,
    NoFeasibleTransfer,
    NumericalFailure,
    SpecValidationError,
    SpreadError,
    TraceParseError,
    TrivialCompletion,
)
from .model import (
    GroupProfile,
    NetworkSpec,
    effective_rate,
    effective_rates,
    fair_rate_matrix,
    homogeneous_spec,
    special_case_rates,
    two_group_spec,
    validate_spec,
)
from .sim import SimConfig, simulate_completion
