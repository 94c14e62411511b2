"""Tensor engine: reverse-mode autodiff, primitives, Adam, and a gradient checker."""
from .functional import (
    concat,
    conv1d,
    layer_norm,
    linear,
    matmul,
    pool_axis,
    prelu,
    relu,
    sigmoid,
    softmax,
)
from .gradcheck import grad_check
from .layers import Conv1d, LayerNorm, Linear, Module, PReLU, param, uniform_init
from .optim import AdamState, adam_step, warmup_cosine
from .tensor import Tensor, inject_fault, no_grad

__all__ = [
    "AdamState",
    "Conv1d",
    "LayerNorm",
    "Linear",
    "Module",
    "PReLU",
    "Tensor",
    "adam_step",
    "concat",
    "conv1d",
    "grad_check",
    "inject_fault",
    "layer_norm",
    "linear",
    "matmul",
    "no_grad",
    "param",
    "pool_axis",
    "prelu",
    "relu",
    "sigmoid",
    "softmax",
    "uniform_init",
    "warmup_cosine",
]
