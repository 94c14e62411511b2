"""Straight-line float64 reference implementations, written without the tensor engine.

Each function takes plain arrays pulled out of a module's parameters, so a
mismatch points at the wiring of the module rather than at shared code.
"""
import numpy as np

A_MAX, A_AVG, BETA = 0.25, 0.25, 0.5


def f64(t):
    return np.asarray(t.data if hasattr(t, "data") else t, dtype=np.float64)


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def relu(x):
    return np.maximum(x, 0.0)


def conv(x, w, b):
    """Same-length cross-correlation, (Cin, T) -> (Cout, T), odd K, dilation 1."""
    cout, cin, k = w.shape
    t = x.shape[1]
    half = k // 2
    xp = np.concatenate([np.zeros((cin, half)), x, np.zeros((cin, half))], axis=1)
    out = np.zeros((cout, t))
    for j in range(k):
        out += w[:, :, j] @ xp[:, j: j + t]
    return out + b[:, None]


def lnorm(x, gamma, beta, eps=1e-5):
    """Normalise each row over its last axis."""
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gamma + beta


def lin(x, layer):
    out = x @ f64(layer.w)
    return out if layer.b is None else out + f64(layer.b)


def cnv(x, layer):
    return conv(x, f64(layer.w), f64(layer.b))


def ln(x, layer):
    return lnorm(x, f64(layer.gamma), f64(layer.beta))


# -- fusion ---------------------------------------------------------------

def main_branch(p, f_concat):
    h = cnv(f_concat, p.main.conv)
    slope = f64(p.main.act.slope)[0]
    h = np.where(h > 0, h, slope * h)
    return ln(h.T, p.main.norm).T


def mscff(p, f_ssl, f_spec):
    f_concat = np.concatenate([f_ssl, f_spec], axis=0)
    f_prime = main_branch(p, f_concat)
    spec_p = sigmoid(cnv(f_prime, p.gate_spec)) * f_spec
    ssl_p = sigmoid(cnv(f_prime, p.gate_ssl)) * f_ssl
    concat_p = sigmoid(cnv(f_prime, p.gate_concat)) * f_concat
    return relu(np.concatenate([spec_p, ssl_p], axis=0) + concat_p)


# -- attention block ------------------------------------------------------

def mhsa(p, z, n_heads):
    t, c = z.shape
    dh = c // n_heads
    q, k, v = lin(z, p.q), lin(z, p.k), lin(z, p.v)
    heads = []
    for h in range(n_heads):
        sl = slice(h * dh, (h + 1) * dh)
        s = q[:, sl] @ k[:, sl].T / np.sqrt(dh)
        s = np.exp(s - s.max(axis=1, keepdims=True))
        a = s / s.sum(axis=1, keepdims=True)
        heads.append(a @ v[:, sl])
    return lin(np.concatenate(heads, axis=1), p.out)


def ffn(p, x):
    return lin(relu(lin(x, p.fc1)), p.fc2)


def sca(p, f):
    """f is (C, T)."""
    f_max = f.max(axis=1)
    f_avg = f.mean(axis=1)

    def fc(v):
        return sigmoid(lin(relu(lin(v, p.fc1)), p.fc2))

    a = sigmoid(A_MAX * fc(f_max) + A_AVG * fc(f_avg) + BETA * fc(f_max + f_avg))
    return f * a[:, None]


def sta(p, f):
    f_max = f.max(axis=0, keepdims=True)
    f_avg = f.mean(axis=0, keepdims=True)
    s_max = sigmoid(cnv(f_max, p.conv_single))
    s_avg = sigmoid(cnv(f_avg, p.conv_single))
    s_cat = sigmoid(cnv(np.concatenate([f_max, f_avg], axis=0), p.conv_concat))
    return f * sigmoid(A_MAX * s_max + A_AVG * s_avg + BETA * s_cat)


def rhma(p, z, n_heads):
    z_mhsa = ln(mhsa(p.mhsa, z, n_heads) + z, p.postln_a) if p.use_mhsa else z
    z1 = ln(ln(ffn(p.ffn1, z_mhsa) + z_mhsa, p.postln_b) + z, p.ln_a)
    z_scta = ln(sta(p.scta.sta, sca(p.scta.sca, z1.T)).T + z1, p.postln_c) if p.use_scta else z1
    return ln(ln(ffn(p.ffn2, z_scta) + z_scta, p.postln_d) + z1, p.ln_b)


# -- whole network --------------------------------------------------------

def forward(net, noisy_mag, ssl):
    c = net.config
    logits = f64(net.ws.logits)
    e = np.exp(logits - logits.max())
    e /= e.sum()
    f_ssl = np.einsum("n,ntd->dt", e, f64(ssl))
    mag = f64(noisy_mag)
    feat = np.sqrt(mag) if c.input_compression == "sqrt" else mag
    fused = mscff(net.mscff, f_ssl, feat) if c.use_mscff else np.concatenate([f_ssl, feat], axis=0)
    z = lin(fused.T, net.proj)
    for block in net.rhma:
        z = rhma(block, z, c.n_heads)
    mask = np.ones_like(mag) if c.identity_mask else sigmoid(lin(z, net.mask_head)).T
    return mask, mask * mag
