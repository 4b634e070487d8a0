"""Exception hierarchy shared across the package."""


class PsnetError(Exception):
    """Base class for all package errors."""


class ValidationError(PsnetError, ValueError):
    """A network, control or config document violates an invariant."""


class InfeasibleAllocationError(PsnetError, ValueError):
    """An allocation breaks a capacity constraint."""


class TopologyError(ValidationError):
    """A control family is applied to a network it was not built for."""


class SolverError(PsnetError, RuntimeError):
    """Numerical failure in the allocation solver."""


class LimitNotResolvedError(PsnetError, RuntimeError):
    """A limiting control value did not settle within the sweep."""


class ReducedChainUnstableError(PsnetError, RuntimeError):
    """The reduced chain shows growth, so no stationary law exists."""


class InsufficientDataError(PsnetError, ValueError):
    """A statistic was requested from a run that is too short."""


class NotMonotoneError(PsnetError, ValueError):
    """A control failed the monotonicity check required for classification."""
