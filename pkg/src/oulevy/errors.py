"""Exception types shared across the toolkit."""


class DimensionError(ValueError):
    """Matrix/vector shapes are inconsistent with the declared model."""


class DomainError(ValueError):
    """A numeric argument is outside the operation's domain."""


class MeasureError(ValueError):
    """A Levy-measure specification violates its invariants."""


class AccuracyError(RuntimeError):
    """Quadrature failed to reach the target tolerance within the budget."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class UnsupportedMeasureError(ValueError):
    """Operation requires a measure structure the given spec does not have."""


class RefusalError(RuntimeError):
    """Computation refused because the regularity report rules it out."""


class ConfigError(ValueError):
    """A config document is malformed or inconsistent."""
