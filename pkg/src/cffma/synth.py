"""Deterministic synthetic speech-like signals and noises for desk-scale experiments."""
from __future__ import annotations

import numpy as np

from .signal import SAMPLE_RATE, Waveform

NOISE_TYPES = ("white", "pink", "brown", "lowband", "midband", "highband",
               "hum", "babble", "modulated", "clicks")


def _bandpass(x: np.ndarray, lo: float, hi: float, sr: int) -> np.ndarray:
    spec = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(x.size, 1 / sr)
    spec[(freqs < lo) | (freqs > hi)] = 0
    return np.fft.irfft(spec, n=x.size)


def _normalize(x: np.ndarray, rms: float) -> np.ndarray:
    return x * (rms / max(np.sqrt(np.mean(x**2)), 1e-12))


def clean_signal(n_samples: int, seed: int, sr: int = SAMPLE_RATE) -> Waveform:
    """Voiced harmonic segments with a gliding pitch, plus short high-band noise bursts."""
    rng = np.random.default_rng(seed)
    t = np.arange(n_samples) / sr
    f0 = rng.uniform(110, 260) * (1 + 0.08 * np.sin(2 * np.pi * rng.uniform(0.3, 1.0) * t))
    phase = 2 * np.pi * np.cumsum(f0) / sr
    voiced = np.zeros(n_samples)
    for h in range(1, 9):
        voiced += rng.uniform(0.3, 1.0) / h * np.sin(h * phase + rng.uniform(0, 2 * np.pi))
    syllable = np.clip(np.sin(2 * np.pi * rng.uniform(2.5, 4.5) * t + rng.uniform(0, 2 * np.pi)), 0, None)
    x = voiced * syllable**0.7

    bursts = np.zeros(n_samples)
    for _ in range(max(1, int(n_samples / sr * 3))):
        length = min(int(rng.uniform(0.03, 0.08) * sr), n_samples)
        start = int(rng.integers(0, max(1, n_samples - length)))
        env = np.hanning(length)
        bursts[start: start + length] += env * rng.normal(size=length)
    x = x + 0.4 * _normalize(_bandpass(bursts, 3000, 7000, sr), np.sqrt(np.mean(x**2)) + 1e-9) * (bursts != 0)
    return Waveform(_normalize(x, 0.1), sr)


def noise_signal(n_samples: int, kind: str, seed: int, sr: int = SAMPLE_RATE) -> Waveform:
    if kind not in NOISE_TYPES:
        raise ValueError(f"unknown noise type {kind!r}")
    rng = np.random.default_rng(seed)
    white = rng.normal(size=n_samples)
    freqs = np.fft.rfftfreq(n_samples, 1 / sr)
    t = np.arange(n_samples) / sr
    if kind == "white":
        x = white
    elif kind in ("pink", "brown"):
        power = 1 if kind == "pink" else 2
        spec = np.fft.rfft(white)
        spec[1:] /= freqs[1:] ** (power / 2)
        spec[0] = 0
        x = np.fft.irfft(spec, n=n_samples)
    elif kind == "lowband":
        x = _bandpass(white, 50, 800, sr)
    elif kind == "midband":
        x = _bandpass(white, 800, 3000, sr)
    elif kind == "highband":
        x = _bandpass(white, 3000, 7800, sr)
    elif kind == "hum":
        base = rng.choice([50.0, 60.0])
        x = sum(np.sin(2 * np.pi * base * k * t) / k for k in range(1, 8)) + 0.1 * white
    elif kind == "babble":
        x = sum(clean_signal(n_samples, int(rng.integers(1 << 30)), sr).samples for _ in range(6))
    elif kind == "modulated":
        x = white * (1 + 0.8 * np.sin(2 * np.pi * rng.uniform(1, 6) * t))
    else:  # clicks
        x = 0.2 * white
        for pos in rng.integers(0, n_samples, size=max(1, n_samples // 800)):
            x[pos: pos + 40] += rng.choice([-1, 1]) * 6 * np.exp(-np.arange(min(40, n_samples - pos)) / 8)
    return Waveform(_normalize(np.asarray(x, dtype=np.float64), 0.1), sr)
