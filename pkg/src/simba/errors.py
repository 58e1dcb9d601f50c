"""Exception hierarchy shared across the package."""


class SimbaError(Exception):
    """Base class for all package errors."""


class DimensionError(SimbaError, ValueError):
    """Operand shapes do not compose."""


class NumericError(SimbaError, ArithmeticError):
    """Non-finite values where finite ones are required."""


class ContractError(SimbaError, RuntimeError):
    """An API precondition was violated by the caller."""


class ConfigurationError(SimbaError, ValueError):
    """Invalid or inconsistent configuration."""


class DataError(SimbaError, ValueError):
    """Malformed or inconsistent input data."""


class IntegrityError(SimbaError):
    """A stored artifact does not match what the caller expected."""


class TrainingDivergedError(SimbaError, FloatingPointError):
    """Loss became non-finite during optimization."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
