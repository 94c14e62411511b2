"""End-to-end masking network, loss, training loop, inference and checkpoints."""
from __future__ import annotations

import math
import os
import struct
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .config import ModelConfig, parse_kv
from .embeddings import EmbeddingStack, WeightedSum, align_frames, provider_synthetic
from .errors import CheckpointError, ConfigError, ContractError, ShapeError
from .fusion import Mscff
from .numerics import functional as fn
from .numerics.layers import Linear, Module
from .numerics.optim import AdamState, adam_step, warmup_cosine
from .numerics.tensor import Tensor, no_grad
from .rhma import Rhma
from .signal import Waveform, istft, reconstruct, stft, synthesize


class CffmaNet(Module):
    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        c = config
        self.ws = WeightedSum(c.ssl_layers)
        if c.use_mscff:
            self.mscff = Mscff(c.ssl_dim, c.n_bins, rng)
        self.proj = Linear(c.ssl_dim + c.n_bins, c.d_model, rng)
        self.rhma = [
            Rhma(c.d_model, c.n_heads, c.d_ff, c.sca_ratio, rng, c.use_mhsa, c.use_scta)
            for _ in range(c.n_rhma if c.use_rhma else 0)
        ]
        self.mask_head = Linear(c.d_model, c.n_bins, rng)
        self.config = c


def build(config: ModelConfig, seed: int | None = None) -> CffmaNet:
    """Initialise every parameter deterministically from ``seed`` (default ``config.seed``)."""
    config.validate()
    rng = np.random.default_rng(config.seed if seed is None else seed)
    return CffmaNet(config, rng)


def census(net: Module) -> list[tuple[str, tuple[int, ...], int]]:
    return [(name, p.shape, p.size) for name, p in net.named_parameters()]


def forward(net: CffmaNet, noisy_mag, ssl_stack) -> tuple[Tensor, Tensor]:
    """Mask in [0, 1] and masked magnitude, both (F, T).

    ``ssl_stack`` is (N, T, D) and already aligned to the STFT frames.
    """
    c = net.config
    mag = noisy_mag.data if isinstance(noisy_mag, Tensor) else np.asarray(noisy_mag, dtype=np.float32)
    stack = ssl_stack if isinstance(ssl_stack, Tensor) else Tensor(np.asarray(ssl_stack, dtype=np.float32))
    if mag.shape[0] != c.n_bins:
        raise ShapeError(f"magnitude has {mag.shape[0]} bins, model expects {c.n_bins}")
    if stack.shape[1] != mag.shape[1] or stack.shape[2] != c.ssl_dim:
        raise ShapeError(f"SSL stack {stack.shape} does not match (N, {mag.shape[1]}, {c.ssl_dim})")
    mag_t = Tensor(mag)
    feat = Tensor(np.sqrt(mag)) if c.input_compression == "sqrt" else mag_t

    f_ssl = net.ws(stack)
    fused = net.mscff(f_ssl, feat) if c.use_mscff else fn.concat([f_ssl, feat], axis=0)
    z = net.proj(fused.T)
    for block in net.rhma:
        z = block(z)
    if c.identity_mask:
        mask = Tensor(np.ones_like(mag))
    else:
        mask = fn.sigmoid(net.mask_head(z)).T
    return mask, mask * mag_t


# ---------------------------------------------------------------------------
# loss

def si_snr_soft(est: Tensor, ref, eps: float = 1e-8) -> Tensor:
    """Differentiable, uncapped SI-SNR in dB."""
    r = np.asarray(ref.samples if isinstance(ref, Waveform) else ref, dtype=np.float32)
    if est.shape != r.shape:
        raise ShapeError(f"length mismatch: {est.shape} vs {r.shape}")
    r = r - r.mean(dtype=np.float64).astype(np.float32)
    e = est - est.mean()
    scale = (e * r).sum() / (float(np.dot(r.astype(np.float64), r)) + eps)
    target = scale * r
    resid = e - target
    ratio = ((target * target).sum() + eps) / ((resid * resid).sum() + eps)
    return ratio.log() * (10.0 / math.log(10.0))


def loss(enhanced_mag: Tensor, clean_mag, enhanced_wav: Tensor, clean_wav,
         lam_mag: float = 1.0, lam_sisnr: float = 1.0) -> Tensor:
    """``lam_mag * mean|enh - clean| - lam_sisnr * si_snr / 10``."""
    clean_mag = np.asarray(clean_mag, dtype=np.float32)
    if enhanced_mag.shape != clean_mag.shape:
        raise ShapeError(f"magnitude shapes differ: {enhanced_mag.shape} vs {clean_mag.shape}")
    total = (enhanced_mag - clean_mag).abs().mean() * lam_mag
    if lam_sisnr:
        total = total - si_snr_soft(enhanced_wav, clean_wav) * (lam_sisnr / 10.0)
    return total


# ---------------------------------------------------------------------------
# data

@dataclass
class Utterance:
    noisy: Waveform
    clean: Waveform
    embeddings: EmbeddingStack | None = None  # None: synthetic provider on the noisy crop


@dataclass
class Features:
    noisy_mag: np.ndarray
    noisy_phase: np.ndarray
    clean_mag: np.ndarray
    clean_wav: np.ndarray
    ssl: np.ndarray  # (N, T, D) aligned
    length: int


def embeddings_for(config: ModelConfig, noisy: Waveform, stack: EmbeddingStack | None = None,
                   offset: int = 0) -> EmbeddingStack:
    """SSL stack covering ``noisy`` (which starts ``offset`` samples into the utterance)."""
    if stack is None:
        return provider_synthetic(noisy, config.ssl_layers, config.ssl_dim, config.ssl_seed)
    if stack.n_layers != config.ssl_layers or stack.dim != config.ssl_dim:
        raise ConfigError(f"embeddings are N={stack.n_layers}, D={stack.dim}; "
                          f"model expects N={config.ssl_layers}, D={config.ssl_dim}")
    sr = noisy.sample_rate
    first = int(round(offset / sr / stack.frame_hop_s))
    count = max(1, int(round(len(noisy) / sr / stack.frame_hop_s)))
    first = min(first, stack.n_frames - 1)
    return EmbeddingStack(stack.layers[:, first: first + count], stack.frame_hop_s)


def prepare(config: ModelConfig, utt: Utterance, offset: int = 0, length: int | None = None) -> Features:
    if len(utt.noisy) != len(utt.clean):
        raise ShapeError("noisy and clean waveforms differ in length")
    length = len(utt.noisy) - offset if length is None else length
    noisy = Waveform(utt.noisy.samples[offset: offset + length], utt.noisy.sample_rate)
    clean = utt.clean.samples[offset: offset + length]
    spec = stft(noisy, config.stft)
    ssl = embeddings_for(config, noisy, utt.embeddings, offset)
    return Features(
        noisy_mag=spec.mag,
        noisy_phase=spec.phase,
        clean_mag=stft(clean, config.stft).mag,
        clean_wav=clean,
        ssl=align_frames(ssl, spec.n_frames),
        length=length,
    )


def item_loss(net: CffmaNet, feats: Features) -> Tensor:
    c = net.config
    _, enh = forward(net, feats.noisy_mag, feats.ssl)
    wav = synthesize(enh, feats.noisy_phase, c.stft, feats.length)
    return loss(enh, feats.clean_mag, wav, feats.clean_wav, c.lam_mag, c.lam_sisnr)


def batch_loss(net: CffmaNet, batch: Sequence[Features]) -> Tensor:
    total = item_loss(net, batch[0])
    for feats in batch[1:]:
        total = total + item_loss(net, feats)
    return total * (1.0 / len(batch))


# ---------------------------------------------------------------------------
# training

def steps_per_epoch(config: ModelConfig, n_items: int) -> int:
    return max(1, -(-n_items // config.batch))


def sample_batch(config: ModelConfig, dataset: Sequence[Utterance], step: int) -> list[tuple[int, int, int]]:
    """(item, offset, length) triples for ``step``; a pure function of (seed, step)."""
    rng = np.random.default_rng([config.seed, step])
    n = len(dataset)
    if config.batch <= n:
        items = rng.permutation(n)[: config.batch]
    else:
        items = rng.integers(0, n, size=config.batch)
    seg = int(round(config.segment_s * dataset[0].noisy.sample_rate))
    out = []
    for i in items:
        total = len(dataset[i].noisy)
        length = min(seg, total)
        offset = int(rng.integers(0, total - length + 1))
        out.append((int(i), offset, length))
    return out


def grad_norm(params: dict[str, Tensor]) -> float:
    return math.sqrt(sum(float(np.sum(p.grad.astype(np.float64) ** 2)) for p in params.values()))


def train(net: CffmaNet, dataset: Sequence[Utterance], state: AdamState | None = None,
          start_step: int = 0, n_steps: int | None = None,
          on_step: Callable[[dict], None] | None = None,
          on_epoch: Callable[[int, AdamState], None] | None = None) -> list[dict]:
    """Run Adam steps ``start_step .. start_step + n_steps`` (default: up to ``config.steps``).

    Returns one log record per step: step, loss, lr, grad_norm, wall_ms. ``loss``
    is measured before that step's update.
    """
    if not dataset:
        raise ContractError("training dataset is empty")
    c = net.config
    if state is None:
        state = AdamState(lr=c.lr)
    n_steps = c.steps - start_step if n_steps is None else n_steps
    params = net.parameters()
    per_epoch = steps_per_epoch(c, len(dataset))
    cache: dict[tuple[int, int, int], Features] = {}
    log = []
    for step in range(start_step, start_step + n_steps):
        t0 = time.perf_counter()
        batch = []
        for key in sample_batch(c, dataset, step):
            if key not in cache:
                if len(cache) > 512:
                    cache.clear()
                cache[key] = prepare(c, dataset[key[0]], key[1], key[2])
            batch.append(cache[key])
        net.zero_grad()
        value = batch_loss(net, batch)
        value.backward()
        norm = grad_norm(params)
        if c.grad_clip > 0 and norm > c.grad_clip:
            for p in params.values():
                p.grad = p.grad * (c.grad_clip / norm)
        lr = warmup_cosine(step, c.lr, c.warmup_steps, c.steps, c.lr_floor)
        adam_step(params, state, lr)
        record = {
            "step": step + 1,
            "loss": float(value.item()),
            "lr": lr,
            "grad_norm": norm,
            "wall_ms": (time.perf_counter() - t0) * 1e3,
        }
        log.append(record)
        if on_step:
            on_step(record)
        if on_epoch and (step + 1) % per_epoch == 0:
            on_epoch(step + 1, state)
    return log


# ---------------------------------------------------------------------------
# inference

def enhance(net: CffmaNet, noisy: Waveform, embeddings: EmbeddingStack | None = None) -> Waveform:
    """Mask the noisy magnitude and resynthesise with the noisy phase."""
    c = net.config
    if len(noisy) < c.stft.fft_len:
        raise ContractError(f"input of {len(noisy)} samples is shorter than one {c.stft.fft_len}-sample window")
    spec = stft(noisy, c.stft)
    ssl = align_frames(embeddings_for(c, noisy, embeddings), spec.n_frames)
    with no_grad():
        _, enh = forward(net, spec.mag, ssl)
    out = istft(reconstruct(enh.data, spec.phase), c.stft, len(noisy), noisy.sample_rate)
    return Waveform(np.clip(out.samples, -1.0, 1.0), noisy.sample_rate)


# ---------------------------------------------------------------------------
# checkpoints

CKPT_MAGIC = b"CFFM"
CKPT_VERSION = 1


@dataclass
class Checkpoint:
    net: CffmaNet
    config: ModelConfig
    opt_state: AdamState | None
    step: int


def _pack_tensors(named: dict[str, np.ndarray]) -> bytes:
    parts = [struct.pack("<I", len(named))]
    for name, arr in named.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, blob: bytes, path):
        self.blob, self.pos, self.path = blob, 0, path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError(f"{self.path}: truncated at byte {self.pos}")
        out = self.blob[self.pos: self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def tensors(self) -> dict[str, np.ndarray]:
        (count,) = self.unpack("<I")
        out = {}
        for _ in range(count):
            (nlen,) = self.unpack("<H")
            name = self.take(nlen).decode("utf-8")
            (ndim,) = self.unpack("<B")
            dims = self.unpack(f"<{ndim}I")
            n = int(np.prod(dims, dtype=np.int64))
            if name in out:
                raise CheckpointError(f"{self.path}: duplicate tensor {name!r}")
            out[name] = np.frombuffer(self.take(4 * n), dtype="<f4").reshape(dims).astype(np.float32)
        return out


def save_checkpoint(path: str | os.PathLike, net: CffmaNet, opt_state: AdamState | None = None,
                    step: int = 0) -> None:
    meta = {"meta.step": step}
    if opt_state is not None:
        meta.update({
            "meta.adam_step": opt_state.step, "meta.adam_lr": repr(opt_state.lr),
            "meta.adam_beta1": repr(opt_state.beta1), "meta.adam_beta2": repr(opt_state.beta2),
            "meta.adam_eps": repr(opt_state.eps),
        })
    text = net.config.to_text() + "".join(f"{k} = {v}\n" for k, v in meta.items())
    cfg = text.encode("utf-8")
    blob = [CKPT_MAGIC, struct.pack("<II", CKPT_VERSION, len(cfg)), cfg]
    blob.append(_pack_tensors({k: p.data for k, p in net.named_parameters()}))
    if opt_state is not None:
        opt = {}
        for name in opt_state.m:
            opt[f"m:{name}"] = opt_state.m[name]
            opt[f"v:{name}"] = opt_state.v[name]
        blob.append(_pack_tensors(opt))
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(b"".join(blob))
    os.replace(tmp, path)


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    with open(path, "rb") as fh:
        r = _Reader(fh.read(), path)
    if r.take(4) != CKPT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version, cfg_len = r.unpack("<II")
    if version != CKPT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    try:
        kv = parse_kv(r.take(cfg_len).decode("utf-8"))
    except UnicodeDecodeError:
        raise CheckpointError(f"{path}: config block is not UTF-8") from None
    meta = {k: kv.pop(k) for k in list(kv) if k.startswith("meta.")}
    config = ModelConfig.from_mapping(kv)
    tensors = r.tensors()

    net = build(config)
    params = net.parameters()
    if set(tensors) != set(params):
        missing = sorted(set(params) - set(tensors))
        extra = sorted(set(tensors) - set(params))
        raise CheckpointError(f"{path}: parameters do not match config (missing {missing}, extra {extra})")
    for name, p in params.items():
        if tensors[name].shape != p.shape:
            raise CheckpointError(f"{path}: {name} has shape {tensors[name].shape}, config implies {p.shape}")
        p.data = tensors[name]

    opt_state = None
    if r.pos < len(r.blob):
        opt = r.tensors()
        opt_state = AdamState(
            lr=float(meta.get("meta.adam_lr", config.lr)),
            beta1=float(meta.get("meta.adam_beta1", 0.9)),
            beta2=float(meta.get("meta.adam_beta2", 0.999)),
            eps=float(meta.get("meta.adam_eps", 1e-8)),
            step=int(meta.get("meta.adam_step", 0)),
        )
        for key, arr in opt.items():
            kind, name = key.split(":", 1)
            if name not in params or arr.shape != params[name].shape:
                raise CheckpointError(f"{path}: optimizer entry {key!r} does not match the parameters")
            (opt_state.m if kind == "m" else opt_state.v)[name] = arr
    return Checkpoint(net, config, opt_state, int(meta.get("meta.step", 0)))
