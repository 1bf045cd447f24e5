class BSUNetError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(BSUNetError, ValueError):
    """Inconsistent block/network/training configuration."""


class ShapeError(BSUNetError, ValueError):
    """Input tensor or array has an unsupported shape."""


class DomainError(BSUNetError, ValueError):
    """Values outside the admissible range (e.g. probabilities outside [0, 1])."""


class DegenerateMaskError(BSUNetError, ValueError):
    """A mask is empty or full where both classes are required."""


class DegenerateVolumeError(BSUNetError, ValueError):
    """A volume has zero intensity range."""


class TrainingError(BSUNetError, RuntimeError):
    """Training could not continue (empty data, NaN loss, phase ordering)."""
