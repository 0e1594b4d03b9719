"""Exception types shared across the engine."""


class EngineError(Exception):
    """Base class for all engine errors."""


class ShapeError(EngineError):
    """Tensor shapes or extents violate an operation's contract."""


class ConfigError(EngineError):
    """A configuration value is outside its documented domain."""


class AudioDecodeError(EngineError):
    """A WAV file could not be decoded (unsupported encoding, truncation)."""


class CheckpointError(EngineError):
    """A checkpoint file is malformed, corrupt, or incompatible."""


class TrainDiverged(EngineError):
    """Training aborted on a non-finite loss; message carries diagnostics."""
