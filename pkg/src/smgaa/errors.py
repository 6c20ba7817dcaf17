"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration, geometry or hyperparameter."""


class DegenerateBatchError(ValueError):
    """Batch too small for the requested statistic."""


class GraphError(RuntimeError):
    """Misuse of the autodiff graph (non-scalar loss, double backward...)."""


class AudioFormatError(ValueError):
    """Audio file that does not match the accepted WAV format."""
