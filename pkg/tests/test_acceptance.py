"""The ten acceptance criteria, one test each.

Every test records a PASS/FAIL line; conftest prints them all in the terminal
summary. ``python tests/test_acceptance.py`` runs them without pytest.
"""
import re
import time

import numpy as np

import oracles as O
from cffma import model as M
from cffma.checks import PIPELINE_TOL, PRIM_TOL, jitter, run_suite
from cffma.config import ModelConfig
from cffma.embeddings import WeightedSum
from cffma.fusion import Mscff
from cffma.numerics import AdamState, Tensor, adam_step
from cffma.rhma import ChannelAttention, MultiHeadSelfAttention, Rhma, Scta, TimeAttention
from cffma.signal import StftConfig, Waveform, istft, mix_at_snr, si_snr, stft, stft_complex
from cffma.synth import NOISE_TYPES, clean_signal, noise_signal

RESULTS: list[str] = []


def report(number, title, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  [{number:2d}] {title:<34} {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def test_01_gradient_fidelity():
    t0 = time.perf_counter()
    worst_prim, worst_pipe, worst_name = 0.0, 0.0, ""
    for seed in range(10):
        for r in run_suite(ModelConfig.tiny(), seed):
            if r.name == "pipeline":
                worst_pipe = max(worst_pipe, r.error)
            elif r.error > worst_prim:
                worst_prim, worst_name = r.error, r.name
    elapsed = time.perf_counter() - t0
    ok = worst_prim < PRIM_TOL and worst_pipe < PIPELINE_TOL and elapsed < 60
    report(1, "gradient fidelity (10 seeds)", ok,
           f"max op err {worst_prim:.2e} ({worst_name}) < 1e-3, pipeline {worst_pipe:.2e} < 1e-2, {elapsed:.1f}s < 60s")


def test_02_stft_round_trip():
    cfg = StftConfig(400, 400, 160)
    t0 = time.perf_counter()
    worst, exact = np.inf, 0
    for seed in range(100):
        x = np.random.default_rng(seed).uniform(-1, 1, 16000).astype(np.float32)
        y = istft(stft_complex(x, cfg), cfg, len(x)).samples.astype(np.float64)
        err = np.sum((y - x) ** 2)
        exact += int(err == 0)
        if err > 0:
            worst = min(worst, 10 * np.log10(np.sum(x.astype(np.float64) ** 2) / err))
    elapsed = time.perf_counter() - t0
    report(2, "STFT/iSTFT round trip (100 x 1 s)", worst > 60 and elapsed < 5,
           f"min SNR {worst:.1f} dB > 60 ({exact}/100 bit-exact in float32), {elapsed:.2f}s < 5s")


def test_03_equation_chain_oracles():
    worst_m, worst_r = 0.0, 0.0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        p = Mscff(16, 9, rng)
        jitter(p, rng)
        f_ssl = rng.normal(size=(16, 5)).astype(np.float32)
        f_spec = rng.uniform(0, 2, (9, 5)).astype(np.float32)
        got = p(Tensor(f_ssl), Tensor(f_spec)).data
        worst_m = max(worst_m, np.abs(got - O.mscff(p, O.f64(f_ssl), O.f64(f_spec))).max())
        block = Rhma(16, 2, 64, 2, rng)
        jitter(block, rng)
        z = rng.normal(size=(5, 16)).astype(np.float32)
        worst_r = max(worst_r, np.abs(block(Tensor(z)).data - O.rhma(block, O.f64(z), 2)).max())
    report(3, "MSCFF / RHMA equation oracles", worst_m < 1e-6 and worst_r < 1e-6,
           f"max abs diff MSCFF {worst_m:.1e}, RHMA {worst_r:.1e} < 1e-6")


def test_04_simplex_invariant():
    rng = np.random.default_rng(0)
    ws = WeightedSum(13)
    state = AdamState(lr=0.1)
    worst_sum, bad = 0.0, 0
    for _ in range(1000):
        ws.logits.grad = rng.normal(scale=rng.choice([0.01, 1, 100]), size=13).astype(np.float32)
        adam_step({"logits": ws.logits}, state)
        e = ws.weights()
        bad += int(np.any(e < 0) or np.any(e > 1))
        worst_sum = max(worst_sum, abs(e.sum() - 1))
        graph = ws(Tensor(np.eye(13, dtype=np.float32)[:, None, :])).data.reshape(-1)
        worst_sum = max(worst_sum, abs(float(graph.astype(np.float64).sum()) - 1))
    report(4, "weighted-sum simplex (1000 Adam steps)", bad == 0 and worst_sum <= 1e-6,
           f"{bad} out-of-range weights, max |sum-1| {worst_sum:.1e} <= 1e-6")


def test_05_mask_contract():
    violations, n = 0, 0
    config = ModelConfig.tiny()
    for seed in range(20):
        rng = np.random.default_rng(seed)
        net = M.build(config, seed)
        jitter(net, rng, scale=rng.choice([0.1, 1.0, 3.0]))
        for _ in range(50):
            t = int(rng.integers(1, 40))
            scale = 10.0 ** rng.uniform(-3, 3)
            mag = (scale * rng.uniform(0, 1, (9, t)) ** 2).astype(np.float32)
            ssl = (rng.normal(size=(4, t, 16)) * 10.0 ** rng.uniform(-2, 2)).astype(np.float32)
            mask, enh = M.forward(net, mag, ssl)
            violations += int(np.sum((mask.data < 0) | (mask.data > 1)))
            violations += int(np.sum(np.abs(enh.data) > np.abs(mag)))
            n += 1
    report(5, "mask contract (1000 forwards)", violations == 0 and n == 1000,
           f"{violations} violations over {n} forwards")


def test_06_attention_properties():
    rng = np.random.default_rng(0)
    worst_row, worst_perm, gates_ok = 0.0, 0.0, True
    for seed in range(10):
        rng = np.random.default_rng(seed)
        m = MultiHeadSelfAttention(16, 2, rng)
        jitter(m, rng)
        t = int(rng.integers(2, 30))
        z = rng.normal(size=(t, 16)).astype(np.float32)
        out, attn = m(Tensor(z), return_attn=True)
        worst_row = max(worst_row, np.abs(attn.data.astype(np.float64).sum(axis=-1) - 1).max())
        perm = rng.permutation(t)
        worst_perm = max(worst_perm, np.abs(m(Tensor(z[perm])).data - out.data[perm]).max())
        sca, sta = ChannelAttention(16, 2, rng), TimeAttention(rng)
        f = Tensor(rng.normal(size=(16, t)).astype(np.float32))
        for g in (sca.gate(f).data, sta.gate(f).data):
            gates_ok &= bool(np.all((g > 0) & (g < 1)))
    s = Scta(16, 2, rng)
    for p in s.parameters().values():
        p.data[:] = 0
    z = rng.normal(size=(7, 16)).astype(np.float32)
    ratio = s(Tensor(z)).data / z
    closed = (1 / (1 + np.exp(-0.5))) ** 2
    const_err = np.abs(ratio - closed).max()
    ok = worst_row <= 1e-6 and worst_perm <= 1e-5 and gates_ok and const_err < 1e-6
    report(6, "attention properties", ok,
           f"row sum err {worst_row:.1e}, perm err {worst_perm:.1e}, gates in (0,1): {gates_ok}, "
           f"zero SCTA gate {ratio.mean():.4f} vs {closed:.4f}")


def overfit_data():
    data = []
    for i in range(4):
        clean = clean_signal(40960, seed=100 + i)
        noise = noise_signal(40960, NOISE_TYPES[i], seed=200 + i)
        mix = mix_at_snr(clean, noise, 0.0, seed=i)
        data.append(M.Utterance(mix.noisy, mix.clean))
    return data


def test_07_overfit_sanity():
    t0 = time.perf_counter()
    config = ModelConfig.desk()
    data = overfit_data()
    net = M.build(config)
    feats = [M.prepare(config, u) for u in data]
    initial = M.batch_loss(net, feats).item()
    M.train(net, data)
    final = M.batch_loss(net, feats).item()
    gains = [si_snr(M.enhance(net, u.noisy), u.clean) - si_snr(u.noisy, u.clean) for u in data]
    elapsed = time.perf_counter() - t0
    ok = final < 0.5 * initial and min(gains) >= 5 and elapsed < 600
    report(7, "overfit sanity (4 utts, 300 steps)", ok,
           f"loss {initial:.3f} -> {final:.3f}, min SI-SNR gain {min(gains):.1f} dB >= 5, {elapsed:.0f}s < 600s")


def _census_names(config):
    return {name: count for name, _, count in M.census(M.build(config))}


def test_08_ablation_structure():
    base = ModelConfig.tiny(batch=1, steps=1)
    full = _census_names(base)
    removed = {
        "i": (r"mscff\.", r"rhma\d+\."),
        "ii": (r"rhma\d+\.",),
        "iii": (r"mscff\.", r"rhma\d+\.mhsa\.", r"rhma\d+\.postln_a\."),
        "iv": (r"mscff\.", r"rhma\d+\.scta\.", r"rhma\d+\.postln_c\."),
        "v": (r"mscff\.",),
    }
    data = [M.Utterance(Waveform(np.random.default_rng(1).uniform(-0.3, 0.3, 400)),
                        Waveform(np.random.default_rng(2).uniform(-0.3, 0.3, 400)))]
    details, ok = [], True
    for row, patterns in removed.items():
        config = ModelConfig.ablation(row, base)
        names = _census_names(config)
        expected_gone = {n for n in full if any(re.match(p, n) for p in patterns)}
        gone = set(full) - set(names)
        same = all(full[n] == names[n] for n in names) and set(names) <= set(full)
        delta = sum(full.values()) - sum(names.values())
        log = M.train(M.build(config), data)
        row_ok = gone == expected_gone and same and delta == sum(full[n] for n in expected_gone) \
            and bool(expected_gone) and np.isfinite(log[0]["loss"])
        ok &= row_ok
        details.append(f"{row}:-{delta}")
    report(8, "ablation census (rows i-v)", ok, " ".join(details) + f" of {sum(full.values())}")


def test_09_determinism_and_resume(tmp_path):
    data = [M.Utterance(mix.noisy, mix.clean) for mix in
            (mix_at_snr(clean_signal(1600, seed=i), noise_signal(1600, "pink", seed=50 + i), 5.0) for i in range(3))]
    config = ModelConfig.tiny(batch=2, steps=16, warmup_steps=4)

    def strip(log):
        return [(r["step"], r["loss"], r["lr"], r["grad_norm"]) for r in log]

    a = M.train(M.build(config), data)
    b = M.train(M.build(config), data)
    identical = strip(a) == strip(b)

    state = AdamState(lr=config.lr)
    net = M.build(config)
    first = M.train(net, data, state, n_steps=6)
    M.save_checkpoint(tmp_path / "k.ckpt", net, state, 6)
    ck = M.load_checkpoint(tmp_path / "k.ckpt")
    rest = M.train(ck.net, data, ck.opt_state, start_step=ck.step, n_steps=10)
    resumed = first + rest
    worst = max(abs(x["loss"] - y["loss"]) for x, y in zip(a, resumed))
    ok = identical and len(resumed) == len(a) and worst <= 1e-6
    report(9, "determinism and checkpoint resume", ok,
           f"bit-identical logs: {identical}, resume max |dloss| {worst:.1e} <= 1e-6")


def test_10_frame_counts():
    n = int(2.56 * 16000)
    t = stft(Waveform(np.zeros(n)), StftConfig()).n_frames
    report(10, "frame count for 2.56 s", n == 40960 and t == 257, f"{n} samples -> T={t} (expected 257)")


if __name__ == "__main__":
    import sys
    import tempfile
    from pathlib import Path

    failures = 0
    for name, fn in sorted((k, v) for k, v in globals().items() if k.startswith("test_")):
        try:
            if "tmp_path" in fn.__code__.co_varnames[: fn.__code__.co_argcount]:
                with tempfile.TemporaryDirectory() as d:
                    fn(Path(d))
            else:
                fn()
        except AssertionError:
            failures += 1
    sys.exit(1 if failures else 0)
