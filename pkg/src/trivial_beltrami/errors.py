"""Exception hierarchy shared by all modules."""


class TBError(Exception):
    """Base class for every error raised by this package."""


class DomainError(TBError, ValueError):
    pass


class PoleError(TBError):
    pass


class BoundViolation(TBError):
    """A sampled value exceeded a declared bound."""


class BudgetExceeded(TBError):
    """The norm budget sum A_j * B_j is not below one."""


class InvariantViolation(TBError):
    pass


class StepFailure(TBError):
    """The adaptive integrator could not meet its tolerance."""

    def __init__(self, message, worst_error=None):
        super().__init__(message)
        self.worst_error = worst_error


class EscapeError(TBError):
    """A backward characteristic left the closed disk."""


class BreakpointStraddle(TBError, ValueError):
    pass


class NonConvergence(TBError):
    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class ConventionError(TBError):
    pass


class ConfigError(TBError, ValueError):
    pass
