"""Finite-difference audit of every differentiable component.

Primitives are checked on all elements of random inputs in [-2, 2]. Modules
and the full pipeline are checked on a few sampled elements of every
parameter tensor, at parameters jittered away from their initial values
(at init every layer-norm beta is zero, which makes some gradients vanish to
below finite-difference resolution).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import model as M
from .config import ModelConfig
from .embeddings import WeightedSum
from .fusion import Mscff
from .numerics import functional as fn
from .numerics.gradcheck import grad_check
from .numerics.layers import Module
from .numerics.tensor import Tensor, inject_fault
from .rhma import Rhma
from .signal import StftConfig, Waveform, stft, synthesize

PRIM_TOL = 1e-3
PIPELINE_TOL = 1e-2


@dataclass
class CheckResult:
    name: str
    error: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.error < self.threshold


def _rand(rng, *shape) -> Tensor:
    return Tensor(rng.uniform(-2, 2, size=shape).astype(np.float32))


def _readout(rng, shape) -> np.ndarray:
    return rng.normal(size=shape).astype(np.float32)


def _check_all(f: Callable[..., Tensor], inputs: list[Tensor], eps: float = 1e-6) -> float:
    return max(grad_check(lambda _: f(*inputs), x, eps=eps) for x in inputs)


def primitive_checks(rng: np.random.Generator) -> dict[str, float]:
    out = {}
    a, b = _rand(rng, 3, 4), _rand(rng, 4, 2)
    w = _readout(rng, (3, 2))
    out["matmul"] = _check_all(lambda a, b: ((a @ b) * w).sum(), [a, b])

    x, k, bias = _rand(rng, 2, 8), _rand(rng, 3, 2, 3), _rand(rng, 3)
    w = _readout(rng, (3, 8))
    out["conv1d"] = _check_all(lambda x, k, bias: (fn.conv1d(x, k, bias, dilation=2) * w).sum(), [x, k, bias])

    x, g, be = _rand(rng, 4, 6), _rand(rng, 6), _rand(rng, 6)
    w = _readout(rng, (4, 6))
    out["layer_norm"] = _check_all(lambda x, g, be: (fn.layer_norm(x, g, be) * w).sum(), [x, g, be])

    x = _rand(rng, 5, 4)
    w = _readout(rng, (5, 4))
    out["sigmoid"] = _check_all(lambda x: (fn.sigmoid(x) * w).sum(), [x])
    out["relu"] = _check_all(lambda x: (fn.relu(x) * w).sum(), [x])
    slope = Tensor(np.array([0.25], dtype=np.float32))
    out["prelu"] = _check_all(lambda x, s: (fn.prelu(x, s) * w).sum(), [x, slope])
    out["softmax"] = _check_all(lambda x: (fn.softmax(x, axis=-1) * w).sum(), [x])
    out["pool_max"] = _check_all(lambda x: (fn.pool_axis(x, 1, "max") * w[:, :1]).sum(), [x])
    out["pool_avg"] = _check_all(lambda x: (fn.pool_axis(x, 0, "avg") * w[:1]).sum(), [x])

    y = _rand(rng, 5, 4)
    pos = Tensor(rng.uniform(0.5, 2, size=(5, 4)).astype(np.float32))
    out["elementwise"] = _check_all(
        lambda x, y, p: ((x * y + x / p - y + p.log() + p.sqrt() + x.abs() + (0.5 * x).exp()) * w).sum()
        + (x**2).mean(), [x, y, pos])
    w2 = _readout(rng, (3, 5))
    out["reshape_transpose_concat"] = _check_all(
        lambda x, y: (fn.concat([x.T, y.reshape(4, 5)], axis=1)[1:, ::2] * w2).sum(), [x, y])

    cfg = StftConfig(16, 16, 8)
    sig = Waveform(rng.uniform(-0.5, 0.5, 100))
    spec = stft(sig, cfg)
    mag = Tensor(spec.mag + 0.1)
    ref = rng.normal(size=100).astype(np.float32)
    out["synthesize"] = _check_all(lambda m: (synthesize(m, spec.phase, cfg, 100) * ref).sum(), [mag])
    est = Tensor(rng.normal(size=100).astype(np.float32))
    out["si_snr_soft"] = _check_all(lambda e: M.si_snr_soft(e, ref), [est])
    return out


def jitter(module: Module, rng: np.random.Generator, scale: float = 0.3) -> None:
    for p in module.parameters().values():
        p.data = (p.data + rng.uniform(-scale, scale, p.shape)).astype(np.float32)


def _check_params(module: Module, f: Callable[[], Tensor], rng: np.random.Generator,
                  per_tensor: int, eps: float, extra: list[Tensor] = ()) -> float:
    worst = 0.0
    for p in list(module.parameters().values()) + list(extra):
        idx = rng.choice(p.size, min(per_tensor, p.size), replace=False)
        worst = max(worst, grad_check(lambda _: f(), p, eps=eps, indices=idx))
    return worst


def module_checks(config: ModelConfig, rng: np.random.Generator, per_tensor: int = 3) -> dict[str, float]:
    c = config
    t = 7
    out = {}

    ws = WeightedSum(c.ssl_layers)
    ws.logits.data = rng.normal(size=c.ssl_layers).astype(np.float32)
    stack = _rand(rng, c.ssl_layers, t, c.ssl_dim)
    w = _readout(rng, (c.ssl_dim, t))
    out["weighted_sum"] = _check_params(ws, lambda: (ws(stack) * w).sum(), rng, per_tensor, 1e-6, [stack])

    mscff = Mscff(c.ssl_dim, c.n_bins, rng)
    jitter(mscff, rng)
    f_ssl, f_spec = _rand(rng, c.ssl_dim, t), _rand(rng, c.n_bins, t)
    w = _readout(rng, (c.ssl_dim + c.n_bins, t))
    out["mscff"] = _check_params(mscff, lambda: (mscff(f_ssl, f_spec) * w).sum(), rng, per_tensor, 1e-5,
                                 [f_ssl, f_spec])

    rhma = Rhma(c.d_model, c.n_heads, c.d_ff, c.sca_ratio, rng)
    jitter(rhma, rng)
    z = _rand(rng, t, c.d_model)
    w = _readout(rng, (t, c.d_model))
    out["rhma"] = _check_params(rhma, lambda: (rhma(z) * w).sum(), rng, per_tensor, 1e-5, [z])
    return out


def pipeline_check(config: ModelConfig, seed: int, per_tensor: int = 2, n_samples: int = 400) -> float:
    """Full loss (network, synthesis, L1 + SI-SNR) against every parameter tensor."""
    rng = np.random.default_rng(seed)
    net = M.build(config, seed)
    jitter(net, rng)
    noisy = Waveform(rng.uniform(-0.5, 0.5, n_samples))
    clean = Waveform(rng.uniform(-0.5, 0.5, n_samples))
    feats = M.prepare(config, M.Utterance(noisy, clean))
    return _check_params(net, lambda: M.item_loss(net, feats), rng, per_tensor, 1e-5)


def run_suite(config: ModelConfig | None = None, seed: int = 0,
              faults: tuple[str, ...] = ()) -> list[CheckResult]:
    """One result per checked op, primitives first, full pipeline last."""
    config = config or ModelConfig.tiny()
    rng = np.random.default_rng(seed)
    with inject_fault(*faults):
        prims = primitive_checks(rng)
        mods = module_checks(config, rng)
        pipe = pipeline_check(config, seed)
    results = [CheckResult(k, v, PRIM_TOL) for k, v in prims.items()]
    results += [CheckResult(k, v, PRIM_TOL) for k, v in mods.items()]
    results.append(CheckResult("pipeline", pipe, PIPELINE_TOL))
    return results
