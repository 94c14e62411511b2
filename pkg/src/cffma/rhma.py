"""Residual hybrid multi-attention block: MHSA, two FFNs and channel/time gating.

Tensors inside the block are laid out (T, C); the gating sub-modules work on
(C, T) and transpose internally.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import ContractError, ShapeError
from .numerics import functional as fn
from .numerics.layers import Conv1d, LayerNorm, Linear, Module
from .numerics.tensor import Tensor

ALPHA_MAX = 0.25
ALPHA_AVG = 0.25
BETA = 0.5


class MultiHeadSelfAttention(Module):
    def __init__(self, d_model: int, n_heads: int, rng: np.random.Generator):
        if d_model % n_heads:
            raise ContractError(f"d_model={d_model} is not divisible by n_heads={n_heads}")
        self.n_heads = n_heads
        self.q = Linear(d_model, d_model, rng)
        # a key bias only shifts each score row by a constant, which softmax cancels
        self.k = Linear(d_model, d_model, rng, bias=False)
        self.v = Linear(d_model, d_model, rng)
        self.out = Linear(d_model, d_model, rng)

    def __call__(self, z: Tensor, return_attn: bool = False):
        t, c = z.shape
        if c != self.q.w.shape[0]:
            raise ShapeError(f"attention expects {self.q.w.shape[0]} channels, got {c}")
        h = self.n_heads
        dh = c // h

        def heads(x):
            return x.reshape(t, h, dh).transpose(1, 0, 2)

        q, k, v = heads(self.q(z)), heads(self.k(z)), heads(self.v(z))
        scores = (q @ k.transpose(0, 2, 1)) * (1.0 / math.sqrt(dh))
        attn = fn.softmax(scores, axis=-1)
        ctx = (attn @ v).transpose(1, 0, 2).reshape(t, c)
        out = self.out(ctx)
        return (out, attn) if return_attn else out


class FeedForward(Module):
    def __init__(self, d_model: int, d_ff: int, rng: np.random.Generator):
        self.fc1 = Linear(d_model, d_ff, rng)
        self.fc2 = Linear(d_ff, d_model, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(fn.relu(self.fc1(x)))


def _mix(s_max: Tensor, s_avg: Tensor, s_third: Tensor) -> Tensor:
    return fn.sigmoid(ALPHA_MAX * s_max + ALPHA_AVG * s_avg + BETA * s_third)


class ChannelAttention(Module):
    """Channel gate from time-pooled max, mean and their sum through a shared FC."""

    def __init__(self, channels: int, ratio: int, rng: np.random.Generator):
        if channels % ratio:
            raise ContractError(f"reduction ratio {ratio} does not divide {channels} channels")
        self.fc1 = Linear(channels, channels // ratio, rng)
        self.fc2 = Linear(channels // ratio, channels, rng)

    def gate(self, f: Tensor) -> Tensor:
        f_max = fn.pool_axis(f, axis=1, mode="max")
        f_avg = fn.pool_axis(f, axis=1, mode="avg")
        pooled = fn.concat([f_max, f_avg, f_max + f_avg], axis=1).T  # (3, C)
        s = fn.sigmoid(self.fc2(fn.relu(self.fc1(pooled))))
        return _mix(s[0], s[1], s[2]).reshape(-1, 1)  # (C, 1)

    def __call__(self, f: Tensor) -> Tensor:
        return f * self.gate(f)


class TimeAttention(Module):
    """Time gate from channel-pooled max and mean, convolved singly (K=3) and jointly (K=5)."""

    def __init__(self, rng: np.random.Generator):
        self.conv_single = Conv1d(1, 1, 3, rng)
        self.conv_concat = Conv1d(2, 1, 5, rng)

    def gate(self, f: Tensor) -> Tensor:
        f_max = fn.pool_axis(f, axis=0, mode="max")
        f_avg = fn.pool_axis(f, axis=0, mode="avg")
        f_cat = fn.concat([f_max, f_avg], axis=0)
        s_max = fn.sigmoid(self.conv_single(f_max))
        s_avg = fn.sigmoid(self.conv_single(f_avg))
        s_cat = fn.sigmoid(self.conv_concat(f_cat))
        return _mix(s_max, s_avg, s_cat)  # (1, T)

    def __call__(self, f: Tensor) -> Tensor:
        return f * self.gate(f)


class Scta(Module):
    def __init__(self, channels: int, ratio: int, rng: np.random.Generator):
        self.sca = ChannelAttention(channels, ratio, rng)
        self.sta = TimeAttention(rng)

    def __call__(self, z: Tensor) -> Tensor:
        return self.sta(self.sca(z.T)).T


class Rhma(Module):
    """One residual hybrid multi-attention block.

    ``use_mhsa`` / ``use_scta`` drop the attention sub-block together with its
    post-norm, passing the residual stream through unchanged.
    """

    def __init__(self, d_model: int, n_heads: int, d_ff: int, sca_ratio: int,
                 rng: np.random.Generator, use_mhsa: bool = True, use_scta: bool = True):
        self.d_model = d_model
        if use_mhsa:
            self.mhsa = MultiHeadSelfAttention(d_model, n_heads, rng)
            self.postln_a = LayerNorm(d_model)
        self.ffn1 = FeedForward(d_model, d_ff, rng)
        self.postln_b = LayerNorm(d_model)
        self.ln_a = LayerNorm(d_model)
        if use_scta:
            self.scta = Scta(d_model, sca_ratio, rng)
            self.postln_c = LayerNorm(d_model)
        self.ffn2 = FeedForward(d_model, d_ff, rng)
        self.postln_d = LayerNorm(d_model)
        self.ln_b = LayerNorm(d_model)

    @property
    def use_mhsa(self) -> bool:
        return hasattr(self, "mhsa")

    @property
    def use_scta(self) -> bool:
        return hasattr(self, "scta")

    def __call__(self, z: Tensor) -> Tensor:
        return rhma_forward(self, z)


def rhma_forward(p: Rhma, z: Tensor) -> Tensor:
    if z.ndim != 2 or z.shape[1] != p.d_model:
        raise ShapeError(f"RHMA expects (T, {p.d_model}), got {z.shape}")
    z_mhsa = p.postln_a(p.mhsa(z) + z) if p.use_mhsa else z
    z1 = p.ln_a(p.postln_b(p.ffn1(z_mhsa) + z_mhsa) + z)
    z_scta = p.postln_c(p.scta(z1) + z1) if p.use_scta else z1
    return p.ln_b(p.postln_d(p.ffn2(z_scta) + z_scta) + z1)
