"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A run configuration is malformed, incomplete, or out of range."""


class NumericalError(RuntimeError):
    """Base class for failures of a numerical procedure."""


class QuadratureError(NumericalError):
    """Adaptive quadrature did not converge within its panel budget."""


class SteadyStateError(NumericalError):
    """Driven trajectory failed to settle into a periodic steady state."""


class FitError(NumericalError):
    """All optimization starts failed to produce a converged fit."""
