"""Differentiable neural-network primitives built on :class:`Tensor`."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import ContractError, ShapeError
from .tensor import Tensor, lift, mm


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return lift(a) @ lift(b)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w + b`` applied over the last axis of ``x``; ``w`` is (in, out)."""
    y = x @ w
    return y if b is None else y + b


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [lift(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, cuts, axis=axis))

    return Tensor._make(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward, "concat")


def sigmoid(x: Tensor) -> Tensor:
    a = x.data
    e = np.exp(-np.abs(a))
    y = np.where(a >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(a.dtype)
    return Tensor._make(y, (x,), lambda g: (g * y * (1 - y),), "sigmoid")


def relu(x: Tensor) -> Tensor:
    a = x.data
    mask = a > 0
    return Tensor._make(np.where(mask, a, 0).astype(a.dtype), (x,), lambda g: (g * mask,), "relu")


def prelu(x: Tensor, slope: Tensor) -> Tensor:
    """Parametric ReLU with a single learnable negative-side slope."""
    a, s = x.data, slope.data
    pos = a > 0
    y = np.where(pos, a, s * a).astype(np.result_type(a.dtype, s.dtype))

    def backward(g):
        gx = g * np.where(pos, 1, s)
        gs = np.sum(g * np.where(pos, 0, a), dtype=np.float64)
        return gx, np.full(s.shape, gs, dtype=s.dtype)

    return Tensor._make(y, (x, slope), backward, "prelu")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    a = x.data
    e = np.exp(a - a.max(axis=axis, keepdims=True))
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)

    return Tensor._make(y, (x,), backward, "softmax")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis to zero mean and unit variance, then apply the affine."""
    a = x.data
    c = a.shape[-1] if a.ndim else 0
    if c == 0:
        raise ShapeError("layer_norm over an empty axis")
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"layer_norm affine must have shape ({c},)")
    dtype = np.result_type(a.dtype, gamma.dtype, beta.dtype)
    a64 = a.astype(np.float64)
    mu = a64.mean(axis=-1, keepdims=True)
    var = ((a64 - mu) ** 2).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = (a64 - mu) * rstd
    y = (xhat * gamma.data + beta.data).astype(dtype)

    def backward(g):
        g64 = g.astype(np.float64)
        lead = tuple(range(a.ndim - 1))
        dgamma = np.sum(g64 * xhat, axis=lead).astype(gamma.dtype)
        dbeta = np.sum(g64, axis=lead).astype(beta.dtype)
        dxhat = g64 * gamma.data
        dx = rstd * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                     - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        return dx.astype(dtype), dgamma, dbeta

    return Tensor._make(y, (x, gamma, beta), backward, "layer_norm")


def conv1d(x: Tensor, w: Tensor, b: Tensor | None = None, dilation: int = 1) -> Tensor:
    """Same-length dilated cross-correlation along time.

    ``x`` is (Cin, T), ``w`` is (Cout, Cin, K) with odd K, ``b`` is (Cout,).
    """
    a, k = x.data, w.data
    if a.ndim != 2 or k.ndim != 3:
        raise ShapeError(f"conv1d expects (Cin,T) and (Cout,Cin,K), got {a.shape}, {k.shape}")
    cout, cin, ksize = k.shape
    if ksize % 2 == 0:
        raise ContractError(f"unsupported kernel size {ksize}: only odd kernels keep length")
    if dilation < 1:
        raise ContractError("dilation must be >= 1")
    if a.shape[0] != cin:
        raise ShapeError(f"conv1d input has {a.shape[0]} channels, kernel expects {cin}")
    t = a.shape[1]
    pad = dilation * (ksize - 1) // 2
    xp = np.pad(a, ((0, 0), (pad, pad)))
    cols = np.stack([xp[:, j * dilation: j * dilation + t] for j in range(ksize)], axis=1)
    cols = cols.reshape(cin * ksize, t)
    w2 = k.reshape(cout, cin * ksize)
    y = mm(w2, cols)
    parents = (x, w)
    if b is not None:
        y = y + b.data[:, None]
        parents = (x, w, b)

    def backward(g):
        gw = mm(g, cols.T).reshape(k.shape)
        gcols = mm(w2.T, g).reshape(cin, ksize, t)
        gxp = np.zeros((cin, t + 2 * pad), dtype=gcols.dtype)
        for j in range(ksize):
            gxp[:, j * dilation: j * dilation + t] += gcols[:, j]
        gx = gxp[:, pad: pad + t]
        if b is None:
            return gx, gw
        return gx, gw, np.sum(g, axis=1, dtype=np.float64).astype(b.dtype)

    return Tensor._make(y, parents, backward, "conv1d")


def pool_axis(x: Tensor, axis: int, mode: str = "max") -> Tensor:
    """Reduce ``axis`` to a singleton by max or mean.

    Max routes the whole gradient to the first maximal element.
    """
    a = x.data
    axis = axis % a.ndim if a.ndim else 0
    n = a.shape[axis] if a.ndim else 0
    if n == 0:
        raise ShapeError("pooling over an empty axis")
    if mode == "max":
        idx = np.argmax(a, axis=axis, keepdims=True)
        y = np.take_along_axis(a, idx, axis=axis)

        def backward(g):
            gx = np.zeros(a.shape, dtype=g.dtype)
            np.put_along_axis(gx, idx, g, axis=axis)
            return (gx,)

        return Tensor._make(y, (x,), backward, "pool_max")
    if mode == "avg":
        y = np.mean(a, axis=axis, keepdims=True, dtype=np.float64).astype(a.dtype)
        return Tensor._make(y, (x,), lambda g: (np.broadcast_to(g / n, a.shape),), "pool_avg")
    raise ContractError(f"unknown pooling mode {mode!r}")
