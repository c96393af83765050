"""Exception types shared across the package."""


class PredsensError(Exception):
    """Base class for all package errors."""


class DataError(PredsensError, ValueError):
    """Malformed or inconsistent input data."""


class ConfigError(PredsensError, ValueError):
    """Invalid configuration value; ``field`` names the offending setting."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class NumericalError(PredsensError, ArithmeticError):
    """A numerical procedure failed (factorization, convergence, ...)."""


class NotPSDError(NumericalError):
    """Cholesky factorization failed even at the largest diagonal shift.

    ``minor`` is the 1-based order of the leading minor that was not
    positive, as reported by LAPACK ``potrf``.
    """

    def __init__(self, message, minor=None, entries=None):
        self.minor = minor
        self.entries = entries or {}
        super().__init__(message)
