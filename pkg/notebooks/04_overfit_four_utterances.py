"""Fit four synthetic 0 dB mixtures and listen to the result.

Takes about a minute on a laptop core. Writes WAVs to ./overfit_out/.

python notebooks/04_overfit_four_utterances.py
"""
from pathlib import Path

from cffma import ModelConfig, Utterance, build, census, enhance, mix_at_snr, si_snr, train, write_wav
from cffma.synth import NOISE_TYPES, clean_signal, noise_signal

out = Path("overfit_out")
out.mkdir(exist_ok=True)

config = ModelConfig.desk()
net = build(config)
print("parameters:", sum(n for _, _, n in census(net)))

data = []
for i in range(4):
    mix = mix_at_snr(clean_signal(40960, seed=100 + i), noise_signal(40960, NOISE_TYPES[i], seed=200 + i), 0.0, seed=i)
    data.append(Utterance(mix.noisy, mix.clean))

log = train(net, data, on_step=lambda r: print(f"step {r['step']:4d}  loss {r['loss']:+.4f}  lr {r['lr']:.2e}")
            if r["step"] % 50 == 0 else None)

for i, u in enumerate(data):
    enh = enhance(net, u.noisy)
    write_wav(out / f"noisy_{i}.wav", u.noisy)
    write_wav(out / f"enhanced_{i}.wav", enh)
    print(f"{NOISE_TYPES[i]:>7}: {si_snr(u.noisy, u.clean):6.2f} dB -> {si_snr(enh, u.clean):6.2f} dB")
