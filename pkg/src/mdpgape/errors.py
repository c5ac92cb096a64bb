"""Exception types."""


class ConfigError(ValueError):
    """Invalid configuration or parameters."""


class DomainError(ValueError):
    """Argument outside the domain of an operation."""


class NumericError(ArithmeticError):
    """An iterative solver failed to converge."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual={residual:.3g})")
        self.residual = residual


class ModelAssumptionError(RuntimeError):
    """Observed data contradicts a modelling assumption (e.g. support size)."""


class PreconditionError(RuntimeError):
    """An operation was called without the data it needs."""
