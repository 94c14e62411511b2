"""Multi-scale cross-domain fusion of SSL features and spectrogram magnitudes."""
from __future__ import annotations

import numpy as np

from .errors import ContractError, ShapeError
from .numerics import functional as fn
from .numerics.layers import Conv1d, LayerNorm, Module, PReLU
from .numerics.tensor import Tensor

GATE_KERNELS = {"spec": 3, "ssl": 5, "concat": 3}


class MainBranch(Module):
    """Pointwise conv, PReLU, then layer norm over channels in each frame."""

    def __init__(self, channels: int, rng: np.random.Generator):
        self.conv = Conv1d(channels, channels, 1, rng)
        self.act = PReLU(0.25)
        self.norm = LayerNorm(channels)

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[0] != self.conv.w.shape[1]:
            raise ShapeError(f"main branch expects {self.conv.w.shape[1]} channels, got {x.shape[0]}")
        h = self.act(self.conv(x))
        return self.norm(h.T).T


class Mscff(Module):
    def __init__(self, ssl_dim: int, n_bins: int, rng: np.random.Generator):
        self.ssl_dim = ssl_dim
        self.n_bins = n_bins
        c = ssl_dim + n_bins
        self.main = MainBranch(c, rng)
        self.gate_spec = Conv1d(c, n_bins, GATE_KERNELS["spec"], rng)
        self.gate_ssl = Conv1d(c, ssl_dim, GATE_KERNELS["ssl"], rng)
        self.gate_concat = Conv1d(c, c, GATE_KERNELS["concat"], rng)

    def gate(self, f_prime: Tensor, which: str) -> Tensor:
        convs = {"spec": self.gate_spec, "ssl": self.gate_ssl, "concat": self.gate_concat}
        if which not in convs:
            raise ContractError(f"unknown gate branch {which!r}")
        return fn.sigmoid(convs[which](f_prime))

    def __call__(self, f_ssl: Tensor, f_spec: Tensor) -> Tensor:
        return mscff(self, f_ssl, f_spec)


def mscff(p: Mscff, f_ssl: Tensor, f_spec: Tensor) -> Tensor:
    """Fuse (D, T) SSL features with (F, T) spectrogram features into (D+F, T)."""
    if f_ssl.shape[1] != f_spec.shape[1]:
        raise ShapeError(f"frame counts differ: {f_ssl.shape[1]} vs {f_spec.shape[1]}")
    f_concat = fn.concat([f_ssl, f_spec], axis=0)
    f_prime = p.main(f_concat)
    spec_g = p.gate(f_prime, "spec") * f_spec
    ssl_g = p.gate(f_prime, "ssl") * f_ssl
    concat_g = p.gate(f_prime, "concat") * f_concat
    return fn.relu(fn.concat([spec_g, ssl_g], axis=0) + concat_g)
