"""Audio I/O, STFT analysis and WOLA synthesis, SNR mixing and SI-SNR."""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    ContractError,
    DegenerateInputError,
    ReconstructionError,
    ShapeError,
    UnsupportedWavError,
    WavFormatError,
)
from .numerics.tensor import Tensor

SAMPLE_RATE = 16000
_PCM = 1
_IEEE_FLOAT = 3
_EXTENSIBLE = 0xFFFE


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32).reshape(-1)
        if self.sample_rate <= 0:
            raise ContractError(f"sample rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(self.samples)):
            raise ContractError("waveform contains non-finite samples")

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class StftConfig:
    fft_len: int = 400
    win_len: int = 400
    hop: int = 160

    def __post_init__(self):
        if not (0 < self.hop <= self.win_len <= self.fft_len):
            raise ContractError(f"need 0 < hop <= win_len <= fft_len, got {self}")
        if self.fft_len % 2:
            raise ContractError("fft_len must be even")

    @property
    def n_bins(self) -> int:
        return self.fft_len // 2 + 1

    def n_frames(self, n_samples: int) -> int:
        return 1 + n_samples // self.hop

    def window(self) -> np.ndarray:
        """Periodic Hann of ``win_len`` centred inside an ``fft_len`` frame."""
        n = np.arange(self.win_len)
        w = 0.5 - 0.5 * np.cos(2 * np.pi * n / self.win_len)
        left = (self.fft_len - self.win_len) // 2
        out = np.zeros(self.fft_len)
        out[left: left + self.win_len] = w
        return out


@dataclass
class SpectroStack:
    mag: np.ndarray  # (F, T)
    phase: np.ndarray  # (F, T, 2): cos, sin
    config: StftConfig
    orig_len: int

    @property
    def n_frames(self) -> int:
        return self.mag.shape[1]


# ---------------------------------------------------------------------------
# WAV files

def read_wav(path: str | os.PathLike, expected_rate: int | None = SAMPLE_RATE) -> Waveform:
    """Read a mono PCM16 or float32 RIFF/WAVE file."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file")
    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(blob):
        cid, size = struct.unpack_from("<4sI", blob, pos)
        body = blob[pos + 8: pos + 8 + size]
        if cid == b"fmt ":
            if len(body) < 16:
                raise WavFormatError(f"{path}: truncated fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", body)
            if fmt[0] == _EXTENSIBLE and len(body) >= 26:
                fmt = (struct.unpack_from("<H", body, 24)[0],) + fmt[1:]
        elif cid == b"data":
            data = body
        pos += 8 + size + (size & 1)
    if fmt is None or data is None:
        raise WavFormatError(f"{path}: missing fmt or data chunk")

    codec, channels, rate, _, _, bits = fmt
    if channels != 1:
        raise UnsupportedWavError(f"{path}: {channels} channels, only mono is supported")
    if expected_rate is not None and rate != expected_rate:
        raise UnsupportedWavError(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz")
    if codec == _PCM and bits == 16:
        n = len(data) // 2
        samples = np.frombuffer(data[: 2 * n], dtype="<i2").astype(np.float32) / 32768.0
    elif codec == _IEEE_FLOAT and bits == 32:
        n = len(data) // 4
        samples = np.frombuffer(data[: 4 * n], dtype="<f4").astype(np.float32)
    else:
        raise UnsupportedWavError(f"{path}: codec {codec} with {bits} bits is not supported")
    return Waveform(samples, rate)


def quantize_pcm16(samples: np.ndarray) -> np.ndarray:
    clipped = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0 - 1.0 / 32768)
    return np.round(clipped * 32768).astype("<i2")


def write_wav(path: str | os.PathLike, wav: Waveform) -> None:
    """Write 16-bit PCM mono, rounding to nearest and clipping to the int16 range."""
    pcm = quantize_pcm16(wav.samples).tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(pcm), b"WAVE",
        b"fmt ", 16, _PCM, 1, wav.sample_rate, wav.sample_rate * 2, 2, 16,
        b"data", len(pcm),
    )
    with open(path, "wb") as fh:
        fh.write(header + pcm)


# ---------------------------------------------------------------------------
# STFT

def _as_samples(x) -> np.ndarray:
    return x.samples if isinstance(x, Waveform) else np.asarray(x, dtype=np.float32).reshape(-1)


def stft_complex(x, cfg: StftConfig = StftConfig()) -> np.ndarray:
    """Raw complex STFT, shape (F, T), with centre reflect padding."""
    s = _as_samples(x).astype(np.float64)
    if s.size < 1:
        raise ContractError("stft needs at least one sample")
    pad = cfg.fft_len // 2
    padded = np.pad(s, pad, mode="reflect") if s.size > 1 else np.full(s.size + 2 * pad, s[0])
    n_frames = cfg.n_frames(s.size)
    idx = np.arange(cfg.fft_len)[None, :] + cfg.hop * np.arange(n_frames)[:, None]
    frames = padded[idx] * cfg.window()
    return np.ascontiguousarray(np.fft.rfft(frames, axis=1).T)


def stft(x, cfg: StftConfig = StftConfig()) -> SpectroStack:
    spec = stft_complex(x, cfg)
    mag = np.abs(spec)
    safe = np.where(mag > 0, mag, 1.0)
    cos = np.where(mag > 0, spec.real / safe, 1.0)
    sin = np.where(mag > 0, spec.imag / safe, 0.0)
    phase = np.stack([cos, sin], axis=-1).astype(np.float32)
    return SpectroStack(mag.astype(np.float32), phase, cfg, _as_samples(x).size)


def reconstruct(mag, phase) -> np.ndarray:
    """Complex spectrum from a magnitude (F, T) and a cos/sin phase (F, T, 2)."""
    mag = np.asarray(mag.data if isinstance(mag, Tensor) else mag, dtype=np.float64)
    phase = np.asarray(phase, dtype=np.float64)
    if phase.shape != mag.shape + (2,):
        raise ShapeError(f"phase shape {phase.shape} does not match magnitude {mag.shape}")
    if np.any(mag < 0):
        raise ContractError("magnitude must be non-negative")
    return mag * phase[..., 0] + 1j * mag * phase[..., 1]


def _envelope(cfg: StftConfig, n_frames: int) -> np.ndarray:
    w2 = cfg.window() ** 2
    env = np.zeros(cfg.fft_len + cfg.hop * (n_frames - 1))
    for t in range(n_frames):
        env[t * cfg.hop: t * cfg.hop + cfg.fft_len] += w2
    return env


def _valid_envelope(cfg: StftConfig, n_frames: int, orig_len: int) -> np.ndarray:
    pad = cfg.fft_len // 2
    env = _envelope(cfg, n_frames)[pad: pad + orig_len]
    if env.size < orig_len:
        raise ReconstructionError(f"{n_frames} frames cannot cover {orig_len} samples")
    if np.any(env < 1e-8):
        raise ReconstructionError("window envelope vanishes inside the output region")
    return env


def _overlap_add(frames: np.ndarray, cfg: StftConfig) -> np.ndarray:
    n_frames = frames.shape[0]
    out = np.zeros(cfg.fft_len + cfg.hop * (n_frames - 1), dtype=frames.dtype)
    for t in range(n_frames):
        out[t * cfg.hop: t * cfg.hop + cfg.fft_len] += frames[t]
    return out


def istft(spec: np.ndarray, cfg: StftConfig = StftConfig(), orig_len: int | None = None,
          sample_rate: int = SAMPLE_RATE) -> Waveform:
    """Weighted overlap-add inverse of :func:`stft_complex`."""
    spec = np.asarray(spec)
    if spec.ndim != 2 or spec.shape[0] != cfg.n_bins:
        raise ShapeError(f"spectrum shape {spec.shape} does not match {cfg.n_bins} bins")
    n_frames = spec.shape[1]
    if orig_len is None:
        orig_len = (n_frames - 1) * cfg.hop
    env = _valid_envelope(cfg, n_frames, orig_len)
    frames = np.fft.irfft(spec.T, n=cfg.fft_len, axis=1) * cfg.window()
    pad = cfg.fft_len // 2
    y = _overlap_add(frames, cfg)[pad: pad + orig_len] / env
    return Waveform(y.astype(np.float32), sample_rate)


def synthesize(mag: Tensor, phase: np.ndarray, cfg: StftConfig, orig_len: int) -> Tensor:
    """Differentiable ``istft(reconstruct(mag, phase))`` with respect to ``mag``.

    The phase is a constant. Returns a 1-D waveform tensor of ``orig_len`` samples.
    """
    m = mag.data
    if phase.shape != m.shape + (2,):
        raise ShapeError(f"phase shape {phase.shape} does not match magnitude {m.shape}")
    n_frames = m.shape[1]
    env = _valid_envelope(cfg, n_frames, orig_len)
    win = cfg.window()
    pad = cfg.fft_len // 2
    cos, sin = phase[..., 0].astype(np.float64), phase[..., 1].astype(np.float64)
    m64 = m.astype(np.float64)
    frames = np.fft.irfft((m64 * cos + 1j * m64 * sin).T, n=cfg.fft_len, axis=1) * win
    y = (_overlap_add(frames, cfg)[pad: pad + orig_len] / env).astype(m.dtype)

    # irfft adjoint: rfft of the output gradient, scaled by 1/n, doubled on interior bins
    weight = np.full(cfg.n_bins, 2.0 / cfg.fft_len)
    weight[0] = weight[-1] = 1.0 / cfg.fft_len

    def backward(g):
        gpad = np.zeros(cfg.fft_len + cfg.hop * (n_frames - 1))
        gpad[pad: pad + orig_len] = g / env
        idx = np.arange(cfg.fft_len)[None, :] + cfg.hop * np.arange(n_frames)[:, None]
        gspec = (np.fft.rfft(gpad[idx] * win, axis=1) * weight).T
        gm = gspec.real * cos + gspec.imag * sin
        return (gm.astype(np.result_type(g.dtype, m.dtype)),)

    return Tensor._make(y, (mag,), backward, "synthesize")


# ---------------------------------------------------------------------------
# mixing and metrics

def _power(x: np.ndarray) -> float:
    return float(np.mean(np.asarray(x, dtype=np.float64) ** 2))


@dataclass
class Mixture:
    noisy: Waveform
    clean: Waveform
    noise: Waveform
    scale: float  # peak-normalization factor applied to all three (1.0 if none)


def mix_at_snr(clean: Waveform, noise: Waveform, snr_db: float, seed: int = 0) -> Mixture:
    """Add ``noise`` to ``clean`` at ``snr_db``.

    A longer noise is cropped at a seeded offset, a shorter one is tiled. If the
    mixture would leave [-1, 1], clean, noise and mixture are scaled down together.
    """
    c = clean.samples.astype(np.float64)
    n = noise.samples.astype(np.float64)
    if c.size == 0 or n.size == 0:
        raise DegenerateInputError("empty clean or noise signal")
    if n.size < c.size:
        n = np.tile(n, -(-c.size // n.size))[: c.size]
    elif n.size > c.size:
        offset = int(np.random.default_rng(seed).integers(0, n.size - c.size + 1))
        n = n[offset: offset + c.size]
    pc, pn = _power(c), _power(n)
    if pc <= 0 or pn <= 0:
        raise DegenerateInputError("clean or noise signal is silent")
    n = n * np.sqrt(pc / (pn * 10 ** (snr_db / 10)))
    y = c + n
    peak = float(np.max(np.abs(y)))
    scale = 1.0
    limit = 1.0 - 1.0 / 32768
    if peak > limit:
        scale = limit / peak
        c, n, y = c * scale, n * scale, y * scale
    sr = clean.sample_rate
    return Mixture(Waveform(y, sr), Waveform(c, sr), Waveform(n, sr), scale)


def measured_snr(clean, noisy) -> float:
    c = _as_samples(clean).astype(np.float64)
    r = _as_samples(noisy).astype(np.float64) - c
    return 10 * np.log10(_power(c) / _power(r))


def si_snr(est, ref) -> float:
    """Scale-invariant SNR in dB, capped at 60 dB for a vanishing residual."""
    e = _as_samples(est).astype(np.float64)
    r = _as_samples(ref).astype(np.float64)
    if e.size != r.size:
        raise ShapeError(f"length mismatch: {e.size} vs {r.size}")
    e = e - e.mean()
    r = r - r.mean()
    rr = float(r @ r)
    if rr <= 0:
        raise DegenerateInputError("reference has zero power")
    target = (float(e @ r) / rr) * r
    resid = e - target
    rp = float(resid @ resid)
    if rp < 1e-12:
        return 60.0
    return float(10 * np.log10(float(target @ target) / rp))
