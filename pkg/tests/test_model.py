import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles as O
from cffma import model as M
from cffma.checks import jitter, pipeline_check
from cffma.config import ABLATIONS, ModelConfig
from cffma.embeddings import EmbeddingStack, provider_synthetic
from cffma.errors import CheckpointError, ConfigError, ContractError, ShapeError
from cffma.numerics import Tensor
from cffma.signal import Waveform, istft, si_snr, stft
from cffma.synth import clean_signal, noise_signal
from cffma.signal import mix_at_snr

TINY = ModelConfig.tiny()


def utterances(n=2, n_samples=1200, seed=0):
    out = []
    for i in range(n):
        clean = clean_signal(n_samples, seed=seed * 10 + i)
        noise = noise_signal(n_samples, "white", seed=seed * 10 + i + 100)
        mix = mix_at_snr(clean, noise, 0.0, seed=i)
        out.append(M.Utterance(mix.noisy, mix.clean))
    return out


def random_inputs(rng, config=TINY, t=33):
    mag = rng.uniform(0, 2, (config.n_bins, t)).astype(np.float32)
    ssl = rng.normal(size=(config.ssl_layers, t, config.ssl_dim)).astype(np.float32)
    return mag, ssl


# -- build ----------------------------------------------------------------

def test_build_is_deterministic():
    a, b = M.build(TINY, 5), M.build(TINY, 5)
    for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert na == nb and pa.data.tobytes() == pb.data.tobytes()
    c = M.build(TINY, 6)
    assert any(not np.array_equal(p.data, q.data) for p, q in zip(a.parameters().values(), c.parameters().values()))


def test_tiny_census():
    net = M.build(TINY)
    rows = M.census(net)
    total = sum(n for _, _, n in rows)
    assert total == net.num_parameters() < 100_000
    assert len({name for name, _, _ in rows}) == len(rows)
    shapes = dict((name, shape) for name, shape, _ in rows)
    assert shapes["proj.w"] == (16 + 9, 16) and shapes["mask_head.w"] == (16, 9)
    assert shapes["ws.logits"] == (4,)


def test_two_independent_rhma_blocks():
    net = M.build(TINY)
    assert len(net.rhma) == 2
    first = {n[len("rhma0."):]: p for n, p in net.named_parameters() if n.startswith("rhma0.")}
    second = {n[len("rhma1."):]: p for n, p in net.named_parameters() if n.startswith("rhma1.")}
    assert first.keys() == second.keys() and first
    assert all(first[k] is not second[k] for k in first)
    assert not np.array_equal(first["mhsa.q.w"].data, second["mhsa.q.w"].data)


def test_inconsistent_config_rejected():
    with pytest.raises(ConfigError):
        ModelConfig.tiny(n_heads=3)
    with pytest.raises(ConfigError):
        ModelConfig.tiny(use_rhma=False, use_mhsa=False)
    with pytest.raises(ConfigError):
        ModelConfig.tiny(sca_ratio=3)


# -- forward --------------------------------------------------------------

@settings(max_examples=15)
@given(st.integers(0, 2**31), st.integers(1, 20))
def test_mask_bounds(seed, t):
    rng = np.random.default_rng(seed)
    net = M.build(TINY, seed % 1000)
    jitter(net, rng, scale=1.0)
    mag, ssl = random_inputs(rng, t=t)
    mask, enh = M.forward(net, mag * 10, ssl * 10)
    assert np.all((mask.data >= 0) & (mask.data <= 1))
    assert np.all(np.abs(enh.data) <= np.abs(mag * 10))


def test_zero_magnitude_gives_zero_output(rng):
    net = M.build(TINY)
    jitter(net, rng)
    _, ssl = random_inputs(rng)
    _, enh = M.forward(net, np.zeros((9, 33), np.float32), ssl)
    np.testing.assert_array_equal(enh.data, 0)


@pytest.mark.parametrize("overrides", [{}, {"input_compression": "sqrt"}] +
                         [ABLATIONS[row] for row in ("i", "ii", "iii", "iv", "v")])
def test_forward_matches_scripted_pipeline(rng, overrides):
    config = ModelConfig.tiny(**overrides)
    net = M.build(config, 3)
    jitter(net, rng)
    mag, ssl = random_inputs(rng, config)
    mask, enh = M.forward(net, mag, ssl)
    want_mask, want_enh = O.forward(net, mag, ssl)
    np.testing.assert_allclose(mask.data, want_mask, atol=1e-6)
    np.testing.assert_allclose(enh.data, want_enh, atol=1e-6)


def test_forward_shape_errors(rng):
    net = M.build(TINY)
    mag, ssl = random_inputs(rng)
    with pytest.raises(ShapeError):
        M.forward(net, mag[:8], ssl)
    with pytest.raises(ShapeError):
        M.forward(net, mag, ssl[:, :32])


# -- loss -----------------------------------------------------------------

def test_loss_examples(rng):
    wav = rng.normal(size=400).astype(np.float32)
    mag = np.abs(rng.normal(size=(9, 51))).astype(np.float32)
    perfect = M.loss(Tensor(mag), mag, Tensor(wav), wav)
    assert perfect.item() <= -8.0
    no_sisnr = M.loss(Tensor(mag), mag, Tensor(wav + 1), wav, lam_sisnr=0.0)
    assert no_sisnr.item() == 0.0
    off = M.loss(Tensor(mag + 0.5), mag, Tensor(wav), wav, lam_mag=2.0, lam_sisnr=0.0)
    assert off.item() == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(ShapeError):
        M.loss(Tensor(mag), mag[:, :50], Tensor(wav), wav)
    with pytest.raises(ShapeError):
        M.si_snr_soft(Tensor(wav), wav[:-1])


def test_si_snr_soft_matches_hard(rng):
    ref = rng.normal(size=500)
    est = ref + 0.5 * rng.normal(size=500)
    assert M.si_snr_soft(Tensor(est.astype(np.float32)), ref).item() == pytest.approx(si_snr(est, ref), abs=1e-3)


@pytest.mark.parametrize("seed", [0, 1])
def test_full_loss_gradcheck(seed):
    assert pipeline_check(TINY, seed) < 1e-2


# -- training -------------------------------------------------------------

def test_train_is_deterministic():
    data = utterances()
    config = ModelConfig.tiny(batch=2, steps=4, warmup_steps=2)
    logs = [M.train(M.build(config), data) for _ in range(2)]
    strip = [[{k: v for k, v in r.items() if k != "wall_ms"} for r in log] for log in logs]
    assert strip[0] == strip[1]
    assert [r["step"] for r in logs[0]] == [1, 2, 3, 4]


def test_train_rejects_empty_dataset():
    with pytest.raises(ContractError):
        M.train(M.build(TINY), [])


def test_sample_batch_is_pure_and_seeded():
    data = utterances(3, 1200)
    config = ModelConfig.tiny(batch=2, segment_s=0.05)
    a = M.sample_batch(config, data, 7)
    assert a == M.sample_batch(config, data, 7)
    assert all(length == 800 and 0 <= off <= 400 for _, off, length in a)
    assert len({i for i, _, _ in a}) == 2
    big = M.sample_batch(config.replace(batch=5), data, 7)
    assert len(big) == 5


def test_batch_gradient_is_mean_of_items(rng):
    net = M.build(TINY, 2)
    jitter(net, rng)
    feats = [M.prepare(TINY, u) for u in utterances(3, 600)]
    params = net.parameters()
    net.zero_grad()
    M.batch_loss(net, feats).backward()
    batch_grads = {k: p.grad.astype(np.float64) for k, p in params.items()}
    mean = {k: 0.0 for k in params}
    for f in feats:
        net.zero_grad()
        M.item_loss(net, f).backward()
        for k, p in params.items():
            mean[k] = mean[k] + p.grad.astype(np.float64) / len(feats)
    for k in params:
        np.testing.assert_allclose(batch_grads[k], mean[k], atol=1e-5, err_msg=k)


def test_train_with_file_embeddings(rng):
    data = utterances(2, 1600)
    for u in data:
        u.embeddings = provider_synthetic(u.noisy, TINY.ssl_layers, TINY.ssl_dim, seed=9)
    log = M.train(M.build(ModelConfig.tiny(batch=2, steps=2, segment_s=0.05)), data)
    assert len(log) == 2 and all(np.isfinite(r["loss"]) for r in log)
    bad = [M.Utterance(data[0].noisy, data[0].clean, EmbeddingStack(np.zeros((4, 5, 8))))]
    with pytest.raises(ConfigError):
        M.train(M.build(TINY), bad)


def test_epoch_callback():
    data = utterances(3, 600)
    seen = []
    M.train(M.build(ModelConfig.tiny(batch=2, steps=5)), data, on_epoch=lambda s, st: seen.append(s))
    assert seen == [2, 4]


# -- enhance --------------------------------------------------------------

def test_enhance_preserves_length_and_reenhances(rng):
    net = M.build(TINY)
    x = Waveform(rng.uniform(-0.3, 0.3, 1001))
    once = M.enhance(net, x)
    twice = M.enhance(net, once)
    assert len(once) == len(twice) == 1001
    with pytest.raises(ContractError):
        M.enhance(net, Waveform(np.zeros(15)))


@pytest.mark.parametrize("config", [ModelConfig.tiny(identity_mask=True), ModelConfig.desk(identity_mask=True)])
def test_identity_mask_round_trip(rng, config):
    net = M.build(config)
    x = Waveform(rng.uniform(-0.5, 0.5, 8000))
    y = M.enhance(net, x)
    err = y.samples.astype(np.float64) - x.samples
    assert 10 * np.log10(np.sum(x.samples.astype(np.float64) ** 2) / np.sum(err**2)) > 60


# -- checkpoints ----------------------------------------------------------

def test_checkpoint_round_trip(tmp_path, rng):
    net = M.build(ModelConfig.tiny(seed=4, input_compression="sqrt"))
    jitter(net, rng)
    M.save_checkpoint(tmp_path / "a.ckpt", net, step=17)
    ck = M.load_checkpoint(tmp_path / "a.ckpt")
    assert ck.step == 17 and ck.opt_state is None and ck.config == net.config
    for (n1, p1), (n2, p2) in zip(net.named_parameters(), ck.net.named_parameters()):
        assert n1 == n2 and p1.data.tobytes() == p2.data.tobytes()
    mag, ssl = random_inputs(rng)
    assert M.forward(net, mag, ssl)[1].data.tobytes() == M.forward(ck.net, mag, ssl)[1].data.tobytes()


def test_checkpoint_layout(tmp_path):
    net = M.build(TINY)
    M.save_checkpoint(tmp_path / "a.ckpt", net)
    blob = (tmp_path / "a.ckpt").read_bytes()
    assert blob[:4] == b"CFFM"
    version, cfg_len = np.frombuffer(blob[4:12], "<u4")
    assert version == 1
    text = blob[12: 12 + cfg_len].decode("utf-8")
    assert "d_model = 16" in text and "stft.fft_len = 16" in text
    n_params = int(np.frombuffer(blob[12 + cfg_len: 16 + cfg_len], "<u4")[0])
    assert n_params == len(net.parameters())


@pytest.mark.parametrize("mutate, match", [
    (lambda b: b"XFFM" + b[4:], "magic"),
    (lambda b: b[:4] + (2).to_bytes(4, "little") + b[8:], "version"),
    (lambda b: b[:-3], "truncated"),
    (lambda b: b.replace(b"d_ff = 64", b"d_ff = 32"), "shape"),
])
def test_checkpoint_rejections(tmp_path, mutate, match):
    M.save_checkpoint(tmp_path / "a.ckpt", M.build(TINY))
    (tmp_path / "a.ckpt").write_bytes(mutate((tmp_path / "a.ckpt").read_bytes()))
    with pytest.raises(CheckpointError, match=match):
        M.load_checkpoint(tmp_path / "a.ckpt")


def test_resume_matches_uninterrupted(tmp_path):
    data = utterances(3, 800)
    config = ModelConfig.tiny(batch=2, steps=14, warmup_steps=3)
    full = M.train(M.build(config), data)

    net = M.build(config)
    part = M.train(net, data, n_steps=4, on_epoch=lambda s, st: M.save_checkpoint(tmp_path / "r.ckpt", net, st, s))
    ck = M.load_checkpoint(tmp_path / "r.ckpt")
    assert ck.step == 4 and ck.opt_state.step == 4
    rest = M.train(ck.net, data, ck.opt_state, start_step=ck.step, n_steps=10)
    for a, b in zip(full, part + rest):
        assert a["step"] == b["step"]
        assert abs(a["loss"] - b["loss"]) <= 1e-6


# -- config ---------------------------------------------------------------

def test_config_text_round_trip():
    c = ModelConfig.desk(use_scta=False, lam_sisnr=0.5, seed=11)
    assert ModelConfig.from_text(c.to_text()) == c
    with pytest.raises(ConfigError, match="unknown"):
        ModelConfig.from_text("colour = blue\n")
    with pytest.raises(ConfigError):
        ModelConfig.from_text("use_mscff = maybe\n")
    assert ModelConfig.from_text("# comment\nd_model = 32  # trailing\n").d_model == 32


@pytest.mark.parametrize("row", sorted(ABLATIONS))
def test_ablation_rows_build_and_step(row):
    config = ModelConfig.ablation(row, ModelConfig.tiny(batch=1, steps=1))
    log = M.train(M.build(config), utterances(1, 400))
    assert np.isfinite(log[0]["loss"])
