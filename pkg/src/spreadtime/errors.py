"""Exception types shared across the package."""


class SpreadError(Exception):
    """Base class for all errors raised by spreadtime."""


class SpecValidationError(SpreadError, ValueError):
    """A network specification violates one or more invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        text = "; ".join(f"{v.code}: {v.message}" for v in self.violations)
        super().__init__(text or "invalid network specification")


class TrivialCompletion(SpreadError):
    """The seeds alone already reach the target count, so T_alpha = 0."""

    def __init__(self, seeds, target):
        self.seeds = int(seeds)
        self.target = int(target)
        super().__init__(f"{seeds} seeds already reach the target count {target}")


class DegenerateReachability(SpreadError):
    """Some reachable transient state can never be left."""


class Infeasible(SpreadError):
    """A planning query has no solution within the admissible range."""


class NearDegenerateRates(SpreadError, ValueError):
    """Stage rates too close for the distinct-rate Erlang formula."""


class InfiniteMoment(SpreadError):
    """The requested moment diverges."""


class NoFeasibleTransfer(SpreadError):
    """No observed contact lasts long enough to complete a transfer."""


class TraceParseError(SpreadError, ValueError):
    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}")


class NumericalFailure(SpreadError):
    """A numerical routine failed to converge or lost its bracket."""
