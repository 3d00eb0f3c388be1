"""Exception types shared across the library."""


class ActionGovError(Exception):
    """Base class for all library-specific errors."""


class EmptySetError(ActionGovError):
    """An operation received or produced an empty set where nonempty is required."""


class UnboundedSetError(ActionGovError):
    """A support/optimization query is unbounded in the requested direction."""


class NumericalError(ActionGovError):
    """A numerical procedure failed to converge or hit a degenerate pivot/denominator."""


class InstabilityError(ActionGovError):
    """A closed-loop matrix is not Schur (spectral radius too large)."""


class NoStabilizingSolutionError(ActionGovError):
    """Riccati iteration failed to converge to a stabilizing solution."""


class MoasConstructionError(ActionGovError):
    """Admissible-set construction became infeasible (disturbance too large)."""


class MoasNotDeterminedError(ActionGovError):
    """Admissible-set recursion hit the iteration cap without finite determination."""


class InfeasibleStateError(ActionGovError):
    """The supervisor's feasible-action set is empty at the queried state."""


class UninitializedGovernorError(ActionGovError):
    """Backup branch reached with no previously held reference."""


class SeedConstructionError(ActionGovError):
    """The invariant seed set of the grid classifier came out empty."""
