"""Exception types raised by the simulation layers."""


class NumericalInstabilityError(ArithmeticError):
    """Non-finite values appeared during integration (time step too large)."""


class DegenerateSteadyStateError(ValueError):
    """The generator has more than one stationary state."""

    def __init__(self, null_dimension: int, message: str | None = None):
        self.null_dimension = null_dimension
        super().__init__(message or f"null space of the generator has dimension {null_dimension}")


class UndefinedCorrelationError(ValueError):
    """Mean photon number too small to normalize a correlation function."""


class ConfigError(ValueError):
    """Invalid run configuration."""
