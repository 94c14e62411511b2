"""SSL feature stacks: file provider, synthetic stand-in, frame alignment, weighted sum."""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, EmbeddingFormatError, ShapeError
from .numerics import functional as fn
from .numerics.layers import Module, param
from .numerics.tensor import Tensor
from .signal import Waveform

SSLE_MAGIC = b"SSLE"
SSLE_VERSION = 1
_HEADER = struct.Struct("<4sIIIII")

SYNTH_WIN = 400  # 25 ms at 16 kHz
SYNTH_HOP = 320  # 20 ms
SYNTH_BANDS = 40


@dataclass
class EmbeddingStack:
    layers: np.ndarray  # (N, T_ssl, D) float32
    frame_hop_s: float = SYNTH_HOP / 16000

    def __post_init__(self):
        self.layers = np.asarray(self.layers, dtype=np.float32)
        if self.layers.ndim != 3 or self.layers.shape[0] < 1:
            raise ShapeError(f"embedding stack must be (N>=1, T, D), got {self.layers.shape}")
        if not np.all(np.isfinite(self.layers)):
            raise ContractError("embedding stack contains non-finite values")

    @property
    def n_layers(self) -> int:
        return self.layers.shape[0]

    @property
    def n_frames(self) -> int:
        return self.layers.shape[1]

    @property
    def dim(self) -> int:
        return self.layers.shape[2]


def provider_save(path: str | os.PathLike, stack: EmbeddingStack) -> None:
    n, t, d = stack.layers.shape
    hop_us = int(round(stack.frame_hop_s * 1e6))
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(SSLE_MAGIC, SSLE_VERSION, n, t, d, hop_us))
        fh.write(stack.layers.astype("<f4").tobytes())


def provider_load(path: str | os.PathLike) -> EmbeddingStack:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise EmbeddingFormatError(f"{path}: truncated header")
    magic, version, n, t, d, hop_us = _HEADER.unpack_from(blob)
    if magic != SSLE_MAGIC:
        raise EmbeddingFormatError(f"{path}: bad magic {magic!r}")
    if version != SSLE_VERSION:
        raise EmbeddingFormatError(f"{path}: unsupported version {version}")
    if n < 1 or d < 1:
        raise EmbeddingFormatError(f"{path}: empty dimensions N={n} D={d}")
    need = n * t * d * 4
    payload = blob[_HEADER.size:]
    if len(payload) < need:
        raise EmbeddingFormatError(f"{path}: payload has {len(payload)} bytes, expected {need}")
    layers = np.frombuffer(payload[:need], dtype="<f4").reshape(n, t, d)
    if not np.all(np.isfinite(layers)):
        raise EmbeddingFormatError(f"{path}: non-finite values in payload")
    return EmbeddingStack(layers.astype(np.float32), hop_us / 1e6)


def band_log_energies(samples: np.ndarray, n_bands: int = SYNTH_BANDS) -> np.ndarray:
    """Per-frame log energy in uniform frequency bands, shape (T_ssl, n_bands)."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size < SYNTH_WIN:
        raise ContractError(f"waveform of {x.size} samples is shorter than one {SYNTH_WIN}-sample frame")
    n_frames = 1 + (x.size - SYNTH_WIN) // SYNTH_HOP
    idx = np.arange(SYNTH_WIN)[None, :] + SYNTH_HOP * np.arange(n_frames)[:, None]
    win = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(SYNTH_WIN) / SYNTH_WIN)
    power = np.abs(np.fft.rfft(x[idx] * win, axis=1)) ** 2
    bands = np.array_split(np.arange(power.shape[1]), n_bands)
    energy = np.stack([power[:, b].sum(axis=1) for b in bands], axis=1)
    return np.log(energy + 1e-10)


def provider_synthetic(x: Waveform, n_layers: int, dim: int, seed: int) -> EmbeddingStack:
    """Deterministic stand-in for a pretrained SSL encoder.

    Each layer is a distinct seeded random projection of the centred band
    log-energies followed by tanh, so layers differ and depend on the audio.
    """
    if dim < 1 or n_layers < 1:
        raise ContractError("n_layers and dim must be >= 1")
    feats = band_log_energies(x.samples)
    feats = feats - feats.mean()
    rng = np.random.default_rng(seed)
    layers = []
    for _ in range(n_layers):
        proj = rng.normal(0.0, 1.0 / np.sqrt(4 * SYNTH_BANDS), size=(SYNTH_BANDS, dim))
        layers.append(np.tanh(feats @ proj))
    return EmbeddingStack(np.stack(layers), SYNTH_HOP / x.sample_rate)


def align_indices(t_src: int, t_dst: int) -> np.ndarray:
    """Nearest source frame for each destination frame, rounding halves up."""
    if t_dst < 1:
        raise ContractError("target frame count must be >= 1")
    if t_dst == 1:
        return np.zeros(1, dtype=np.int64)
    t = np.arange(t_dst, dtype=np.int64)
    return (2 * t * (t_src - 1) + (t_dst - 1)) // (2 * (t_dst - 1))


def align_frames(stack: EmbeddingStack, t_stft: int) -> np.ndarray:
    """Nearest-neighbour resampling of the stack to ``t_stft`` frames, (N, t_stft, D)."""
    if stack.n_frames < 1:
        raise ShapeError("embedding stack has no frames")
    return stack.layers[:, align_indices(stack.n_frames, t_stft), :]


class WeightedSum(Module):
    """Learnable convex combination of SSL layers.

    The weights are ``softmax(logits)``, so they stay on the simplex for any logits.
    """

    def __init__(self, n_layers: int):
        self.logits = param(np.zeros(n_layers))

    def weights(self) -> np.ndarray:
        z = self.logits.data.astype(np.float64)
        e = np.exp(z - z.max())
        return e / e.sum()

    def __call__(self, stack) -> Tensor:
        return weighted_sum(stack, self)


def weighted_sum(stack, params: WeightedSum) -> Tensor:
    """Sum_i e(i) z(i) over a (N, T, D) stack, returned as (D, T)."""
    stack = stack if isinstance(stack, Tensor) else Tensor(np.asarray(stack, dtype=np.float32))
    n, t, d = stack.shape
    if n != params.logits.shape[0]:
        raise ShapeError(f"stack has {n} layers, weighted sum expects {params.logits.shape[0]}")
    e = fn.softmax(params.logits).reshape(1, n)
    return (e @ stack.reshape(n, t * d)).reshape(t, d).T
