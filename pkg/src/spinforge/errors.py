"""Exception types shared across the package."""


class SpinforgeError(Exception):
    """Base class for package errors."""


class CapacityError(SpinforgeError, ValueError):
    """Requested system is larger than the dense-vector backend allows."""


class NumericalError(SpinforgeError, ArithmeticError):
    """A numerical routine failed or hit a singular configuration."""


class SingularityError(NumericalError):
    """An energy denominator vanished."""


class ConfigError(SpinforgeError, ValueError):
    """Invalid experiment configuration."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key
