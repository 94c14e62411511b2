"""Framing, overlap-add and mixing at a target SNR.

python notebooks/02_stft_and_mixing.py
"""
import numpy as np

from cffma.signal import StftConfig, Waveform, istft, measured_snr, mix_at_snr, si_snr, stft, stft_complex
from cffma.synth import clean_signal, noise_signal

cfg = StftConfig()                       # 400-sample Hann window, 160 hop, 400-point FFT
print("bins:", cfg.n_bins, " frames for 2.56 s:", cfg.n_frames(40960))

clean = clean_signal(40960, seed=3)
spec = stft(clean, cfg)
print("magnitude", spec.mag.shape, "phase", spec.phase.shape)

# analysis then weighted overlap-add gives the input back
back = istft(stft_complex(clean.samples, cfg), cfg, len(clean))
print("round trip max abs err:", np.abs(back.samples - clean.samples).max())

# a hop that leaves gaps in the window envelope cannot be inverted
try:
    gappy = StftConfig(64, 64, 64)
    istft(stft_complex(clean.samples[:4000], gappy), gappy, 4000)
except Exception as e:
    print(type(e).__name__, "-", e)

for kind in ("white", "pink", "babble"):
    noise = noise_signal(40960, kind, seed=7)
    for snr in (0, 10):
        mix = mix_at_snr(clean, noise, snr, seed=1)
        print(f"{kind:>7} @ {snr:2d} dB: measured {measured_snr(mix.clean, mix.noisy):6.2f} dB, "
              f"SI-SNR {si_snr(mix.noisy, mix.clean):6.2f} dB, peak scale {mix.scale:.3f}")

# SI-SNR ignores gain
print("gain invariance:", si_snr(Waveform(0.1 * clean.samples), clean))
