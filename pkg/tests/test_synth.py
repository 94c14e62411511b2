import numpy as np
import pytest

from cffma.synth import NOISE_TYPES, clean_signal, noise_signal


@pytest.mark.parametrize("n", [1, 100, 1600, 40960])
def test_clean_signal_any_length(n):
    x = clean_signal(n, seed=1)
    assert len(x) == n and np.all(np.isfinite(x.samples))


def test_clean_signal_is_deterministic_and_structured():
    a, b = clean_signal(16000, seed=3), clean_signal(16000, seed=3)
    assert a.samples.tobytes() == b.samples.tobytes()
    assert np.sqrt(np.mean(a.samples.astype(np.float64) ** 2)) == pytest.approx(0.1, rel=1e-5)
    spec = np.abs(np.fft.rfft(a.samples))
    # harmonic energy is concentrated: the top 5% of bins hold most of it
    top = np.sort(spec**2)[::-1]
    assert top[: len(top) // 20].sum() > 0.5 * top.sum()


@pytest.mark.parametrize("kind", NOISE_TYPES)
def test_noise_types(kind):
    x = noise_signal(8000, kind, seed=2)
    assert len(x) == 8000 and np.all(np.isfinite(x.samples))
    assert np.sqrt(np.mean(x.samples.astype(np.float64) ** 2)) == pytest.approx(0.1, rel=1e-5)
    assert x.samples.tobytes() == noise_signal(8000, kind, seed=2).samples.tobytes()


def test_ten_noise_types():
    assert len(set(NOISE_TYPES)) == 10
    with pytest.raises(ValueError):
        noise_signal(10, "rain", seed=0)
