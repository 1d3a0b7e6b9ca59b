"""Exception types shared across the package."""


class SpikeTempoError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(SpikeTempoError):
    """A parameter or configuration invariant was violated."""


class ShapeError(SpikeTempoError):
    """Tensor shapes are incompatible with the requested operation."""


class IngestionError(SpikeTempoError):
    """A data file or event record could not be read or is malformed."""


class NumericError(SpikeTempoError):
    """A non-finite value appeared where finite arithmetic is required."""


class TrainingDiverged(NumericError):
    """Training loss became non-finite."""
