"""Exception hierarchy for the toolkit.

Everything derives from CosmopertError so callers can catch broadly; the CLI
maps ConfigError -> exit 2, OSError -> exit 3, NumericError -> exit 4.
"""


class CosmopertError(Exception):
    """Base class for all toolkit errors."""


class DomainError(CosmopertError, ValueError):
    """Input outside the mathematical domain of an operation."""


class DataError(CosmopertError, ValueError):
    """Malformed numerical input (non-finite samples, shape mismatch, ...)."""


class PhysicalityError(CosmopertError, ValueError):
    """Equation of state produced a squared sound speed outside [0, 1]."""


class NumericError(CosmopertError, RuntimeError):
    """A numerical procedure (quadrature, root finding, ODE step) failed."""


class StiffnessError(NumericError):
    """Adaptive step size underflowed; reports the failing mode."""

    def __init__(self, message, k2=None):
        super().__init__(message)
        self.k2 = k2


class SingularityReachedError(NumericError):
    """Background hit a = 0 or eps -> 0/inf inside the requested range."""

    def __init__(self, message, last_eta=None):
        super().__init__(message)
        self.last_eta = last_eta


class UndefinedTimeError(DomainError):
    """tau is undefined (vanishing sound speed along the trajectory)."""


class UnclassifiableEosError(DomainError):
    """Late-time regime is undefined for this equation of state (pure dust)."""


class PreconditionError(CosmopertError, ValueError):
    """An operation's precondition was violated (e.g. nonzero spatial mean)."""


class InterpolationError(DomainError):
    """Evaluation outside the tabulated background range."""


class IllConditionedFitError(NumericError):
    """Least-squares basis condition number too large; shrink the window."""


class UnsupportedRegimeError(DomainError):
    """Operation not defined in this dynamical regime (e.g. dust polar modes)."""


class WindowTooEarlyError(NumericError):
    """Asymptotic fit residual too large; the window starts too early."""


class InconclusiveError(NumericError):
    """Window insufficient for limit extraction; carries diagnostics."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(CosmopertError, ValueError):
    """Invalid CLI configuration document."""
