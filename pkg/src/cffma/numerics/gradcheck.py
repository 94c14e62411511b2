from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .tensor import Tensor


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float | None = None,
               indices: Iterable[int] | None = None, dtype=np.float64) -> float:
    """Max relative error between autodiff and central differences of ``f`` at ``x``.

    ``x`` is evaluated in ``dtype`` for the duration of the check (float64 by
    default, so that the comparison measures the backward rules rather than
    float32 rounding); its data and grad are restored afterwards. ``indices``
    restricts the comparison to a subset of flat element positions.
    The relative error of one element is ``|a - n| / max(|a|, |n|, 1e-8)``.
    """
    if eps is None:
        eps = 1e-3 if np.dtype(dtype) == np.float32 else 1e-6
    saved_data, saved_grad, saved_rg = x.data, x.grad, x.requires_grad
    try:
        x.data = np.ascontiguousarray(saved_data, dtype=dtype)
        x.requires_grad = True
        x.grad = None
        f(x).backward()
        analytic = np.zeros(x.shape, dtype=np.float64) if x.grad is None else x.grad.astype(np.float64)
        flat = x.data.reshape(-1)
        idx = range(flat.size) if indices is None else indices
        worst = 0.0
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            fp = float(f(x).data.astype(np.float64).sum())
            flat[i] = orig - eps
            fm = float(f(x).data.astype(np.float64).sum())
            flat[i] = orig
            numeric = (fp - fm) / (2 * eps)
            a = analytic.reshape(-1)[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
        return worst
    finally:
        x.data = saved_data
        x.grad = saved_grad
        x.requires_grad = saved_rg
