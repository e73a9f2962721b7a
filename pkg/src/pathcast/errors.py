"""Exception types shared across the package."""


class GraphParseError(ValueError):
    """A global-graph file line failed validation (message carries the line number)."""


class ShapeError(ValueError):
    """Tensor operation received incompatible shapes."""


class TapeStateError(RuntimeError):
    """A gradient tape was used out of order (e.g. backward called twice)."""


class NumericalError(ArithmeticError):
    """A forward computation produced a non-finite value."""


class ConfigError(ValueError):
    """A configuration object is internally inconsistent or mismatched."""


class GenerationError(RuntimeError):
    """Synthetic data generation produced no usable output."""
