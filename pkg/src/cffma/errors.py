"""Exception types shared across the package."""


class CffmaError(Exception):
    """Base class for all package errors."""


class ShapeError(CffmaError, ValueError):
    """Operand shapes are incompatible with the operation."""


class ContractError(CffmaError, ValueError):
    """A precondition of an operation was violated."""


class WavFormatError(CffmaError, ValueError):
    """A file is not a readable RIFF/WAVE stream."""


class UnsupportedWavError(WavFormatError):
    """A well-formed WAV file uses a codec, layout or rate we do not accept."""


class DegenerateInputError(CffmaError, ValueError):
    """An input is silent or otherwise carries no usable signal."""


class ReconstructionError(CffmaError, ValueError):
    """Overlap-add synthesis cannot be normalized somewhere in the output."""


class EmbeddingFormatError(CffmaError, ValueError):
    """An SSLE embedding file is malformed."""


class ConfigError(CffmaError, ValueError):
    """A configuration is inconsistent or contains unknown keys."""


class CheckpointError(CffmaError, ValueError):
    """A checkpoint file is malformed or does not match its config."""
