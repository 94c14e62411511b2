"""Masking speech enhancer fusing SSL embeddings with spectrograms, on a small numpy autodiff engine."""
from .config import ABLATIONS, ModelConfig
from .embeddings import EmbeddingStack, WeightedSum, provider_load, provider_save, provider_synthetic
from .errors import (
    CffmaError,
    CheckpointError,
    ConfigError,
    ContractError,
    DegenerateInputError,
    EmbeddingFormatError,
    ReconstructionError,
    ShapeError,
    UnsupportedWavError,
    WavFormatError,
)
from .model import (
    CffmaNet,
    Utterance,
    build,
    census,
    enhance,
    forward,
    load_checkpoint,
    loss,
    save_checkpoint,
    train,
)
from .signal import StftConfig, Waveform, istft, mix_at_snr, read_wav, si_snr, stft, write_wav

__version__ = "0.1.0"

__all__ = [
    "ABLATIONS",
    "CffmaError",
    "CffmaNet",
    "CheckpointError",
    "ConfigError",
    "ContractError",
    "DegenerateInputError",
    "EmbeddingFormatError",
    "EmbeddingStack",
    "ModelConfig",
    "ReconstructionError",
    "ShapeError",
    "StftConfig",
    "UnsupportedWavError",
    "Utterance",
    "WavFormatError",
    "Waveform",
    "WeightedSum",
    "build",
    "census",
    "enhance",
    "forward",
    "istft",
    "load_checkpoint",
    "loss",
    "mix_at_snr",
    "provider_load",
    "provider_save",
    "provider_synthetic",
    "read_wav",
    "save_checkpoint",
    "si_snr",
    "stft",
    "train",
    "write_wav",
]
