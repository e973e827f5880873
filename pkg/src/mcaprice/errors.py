"""Exception hierarchy."""


class MCAError(Exception):
    """Base class for all package errors."""


class DomainError(MCAError, ValueError):
    """Argument outside the domain of a function (negative quantity, bad price...)."""


class ConfigError(MCAError, ValueError):
    """Invalid scenario or experiment configuration."""


class InfeasibleError(MCAError):
    """Requested traffic cannot be carried by the available capacity."""


class RegimeError(MCAError):
    """A shortcut was used outside the regime where it is valid."""


class ConvexityError(MCAError):
    """A concavity assumption required for global optimality does not hold."""


class SolverError(MCAError):
    """An iterative solver hit its iteration cap.

    ``residual`` carries the best residual reached and ``trace`` an optional
    iterate history.
    """

    def __init__(self, message, residual=float("nan"), trace=None):
        super().__init__(message)
        self.residual = residual
        self.trace = trace
