"""Shapes through the fusion block and one residual attention block.

python notebooks/03_fusion_and_attention.py
"""
import numpy as np

from cffma.fusion import Mscff
from cffma.numerics import Tensor
from cffma.rhma import ChannelAttention, MultiHeadSelfAttention, Rhma, TimeAttention

rng = np.random.default_rng(1)
D, F, T = 16, 9, 12

f_ssl = Tensor(rng.normal(size=(D, T)).astype(np.float32))
f_spec = Tensor(rng.uniform(0, 1, size=(F, T)).astype(np.float32))

fuse = Mscff(D, F, rng)
fused = fuse(f_ssl, f_spec)
print("fused:", fused.shape, " nonnegative:", bool((fused.data >= 0).all()))

mhsa = MultiHeadSelfAttention(16, 2, rng)
z = Tensor(rng.normal(size=(T, 16)).astype(np.float32))
out, attn = mhsa(z, return_attn=True)
print("attention maps:", attn.shape, " rows sum to", attn.data.sum(axis=-1).min(), "..", attn.data.sum(axis=-1).max())

# channel and time gates live strictly inside (0, 1)
f = Tensor(rng.normal(size=(16, T)).astype(np.float32))
print("channel gate:", ChannelAttention(16, 2, rng).gate(f).shape)
print("time gate:   ", TimeAttention(rng).gate(f).shape)

block = Rhma(16, 2, 64, 2, rng)
print("block out:", block(z).shape, " params:", block.num_parameters())
for name, p in block.named_parameters():
    print(f"  {name:<22} {p.shape}")
