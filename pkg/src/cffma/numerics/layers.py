"""Parameter containers. A ``Module`` exposes its tensors by dotted name."""
from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import functional as fn
from .tensor import Tensor


def param(data) -> Tensor:
    return Tensor(np.asarray(data, dtype=np.float32), requires_grad=True)


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = 1.0 / math.sqrt(fan_in)
    return param(rng.uniform(-bound, bound, size=shape))


class Module:
    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if isinstance(value, Tensor):
                if value.requires_grad:
                    yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{name}{i}.")

    def parameters(self) -> dict[str, Tensor]:
        return dict(self.named_parameters())

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters().values())


class Linear(Module):
    """Frame-wise affine map; weight stored as (in, out)."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, bias: bool = True):
        self.w = uniform_init(rng, (n_in, n_out), n_in)
        self.b = param(np.zeros(n_out)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return fn.linear(x, self.w, self.b)


class Conv1d(Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator,
                 dilation: int = 1):
        self.w = uniform_init(rng, (c_out, c_in, kernel), c_in * kernel)
        self.b = param(np.zeros(c_out))
        self.dilation = dilation

    @property
    def kernel(self) -> int:
        return self.w.shape[2]

    def __call__(self, x: Tensor) -> Tensor:
        return fn.conv1d(x, self.w, self.b, self.dilation)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gamma = param(np.ones(dim))
        self.beta = param(np.zeros(dim))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return fn.layer_norm(x, self.gamma, self.beta, self.eps)


class PReLU(Module):
    def __init__(self, init: float = 0.25):
        self.slope = param([init])

    def __call__(self, x: Tensor) -> Tensor:
        return fn.prelu(x, self.slope)
