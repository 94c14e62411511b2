from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..errors import ContractError
from .tensor import Tensor


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def _named(params) -> Mapping[str, Tensor]:
    if isinstance(params, Mapping):
        return params
    return {str(i): p for i, p in enumerate(params)}


def adam_step(params: Mapping[str, Tensor] | Sequence[Tensor], state: AdamState,
              lr: float | None = None) -> None:
    """One bias-corrected Adam update, in place. Gradients are left as they are."""
    named = _named(params)
    for name, p in named.items():
        if p.grad is None:
            raise ContractError(f"parameter {name!r} has no gradient")
    state.step += 1
    lr = state.lr if lr is None else lr
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, p in named.items():
        g = p.grad.astype(np.float64)
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros(p.shape, dtype=np.float32)
            v = np.zeros(p.shape, dtype=np.float32)
        m64 = b1 * m.astype(np.float64) + (1 - b1) * g
        v64 = b2 * v.astype(np.float64) + (1 - b2) * g * g
        state.m[name] = m64.astype(np.float32)
        state.v[name] = v64.astype(np.float32)
        update = lr * (m64 / c1) / (np.sqrt(v64 / c2) + state.eps)
        p.data = (p.data.astype(np.float64) - update).astype(p.dtype)


def warmup_cosine(step: int, base_lr: float, warmup: int, total: int, floor: float = 0.1) -> float:
    """Linear warmup to ``base_lr`` then cosine decay to ``floor * base_lr`` at ``total``.

    ``step`` is 0-based.
    """
    if warmup > 0 and step < warmup:
        return base_lr * (step + 1) / warmup
    span = max(total - warmup, 1)
    frac = min(max(step - warmup, 0) / span, 1.0)
    lo = floor * base_lr
    return lo + 0.5 * (base_lr - lo) * (1.0 + math.cos(math.pi * frac))
