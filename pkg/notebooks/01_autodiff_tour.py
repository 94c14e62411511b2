"""A short walk through the tensor engine.

Run from the repository root:  python notebooks/01_autodiff_tour.py
"""
import numpy as np

from cffma.numerics import Tensor, grad_check, inject_fault, layer_norm, param, softmax

rng = np.random.default_rng(0)

# tensors hold float32; anything built from a requires_grad tensor is recorded
x = param(rng.normal(size=(4, 3)))
y = ((x * x).sum(axis=1) + 1.0).log().mean()
y.backward()
print("y =", y.item())
print("dy/dx (autodiff):\n", x.grad)
print("dy/dx (by hand):\n", (2 * x.data / (1 + (x.data ** 2).sum(axis=1, keepdims=True))) / 4)

# grad_check compares against central differences, evaluated in float64
gamma, beta = param(rng.uniform(0.5, 1.5, 3)), param(rng.normal(size=3))
# f must return a scalar; a random readout keeps every output element in play
w = rng.normal(size=(4, 3))
err = grad_check(lambda t: (layer_norm(t, gamma, beta) * Tensor(w)).sum(), x)
print("layer_norm relative error:", err)

# a broken backward rule is caught immediately
with inject_fault("softmax"):
    err = grad_check(lambda t: (softmax(t, axis=-1) * Tensor(w)).sum(), x)
print("softmax with a corrupted backward:", err)
err = grad_check(lambda t: (softmax(t, axis=-1) * Tensor(w)).sum(), x)
print("softmax, healthy:", err)
