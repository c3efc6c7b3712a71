"""Exception hierarchy shared by all modules."""

__all__ = [
    "ChanagingError",
    "ConfigError",
    "DomainError",
    "NumericError",
    "ConvergenceError",
    "DegenerateError",
]


class ChanagingError(Exception):
    """Base class for all package errors."""


class ConfigError(ChanagingError, ValueError):
    """Invalid or inconsistent configuration value."""


class DomainError(ChanagingError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class NumericError(ChanagingError, ArithmeticError):
    """A numerical precondition failed (indefinite matrix, singular system)."""


class ConvergenceError(NumericError):
    """Iterative solver hit its iteration cap.

    Attributes
    ----------
    residual : float
        Last residual observed before giving up.
    iterations : int
        Number of iterations performed.
    """

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class DegenerateError(NumericError):
    """Quantity undefined because its input is identically zero."""
