"""Exception types shared across the package."""


class LogPoissonError(Exception):
    """Base class for package errors."""


class DomainError(LogPoissonError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class NumericalError(LogPoissonError, ArithmeticError):
    """A computation underflowed, diverged or otherwise lost meaning."""


class ConfigError(LogPoissonError, ValueError):
    """A run configuration failed validation."""
