"""Exception types raised across the package."""


class LeakbeamError(Exception):
    """Base class for all package errors."""


class InvalidInputError(LeakbeamError, ValueError):
    """An argument does not satisfy an operation's precondition."""


class DomainError(LeakbeamError, ValueError):
    """A scalar argument lies outside the function's domain."""


class SingularityError(LeakbeamError, ArithmeticError):
    """A matrix that must have full rank does not."""


class BracketError(LeakbeamError, ValueError):
    """A root-finding target lies outside the bracketed range."""


class ConfigurationError(LeakbeamError, ValueError):
    """A scenario or scheme parameter is inconsistent."""


class SolverError(LeakbeamError, RuntimeError):
    """A convex solve failed (infeasible, unbounded, or did not converge).

    ``residuals`` carries whatever diagnostics were available when the
    failure was detected.
    """

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals or {}
