"""Export hidden states of a pretrained speech model to the SSLE format.

Needs ``torch`` and ``transformers``, which the package itself never imports.
Pass the files to ``cffma enhance --embeddings`` or list them in the fourth
manifest column; train with a config whose ssl_dim / ssl_layers match the model
(768 and 13 for a base-size WavLM).

python notebooks/06_export_ssl_embeddings.py in.wav out.ssle [model-name]
"""
import sys

import numpy as np

from cffma import EmbeddingStack, provider_save, read_wav


def main(in_wav, out_file, name="microsoft/wavlm-base-plus"):
    import torch
    from transformers import AutoModel

    wav = read_wav(in_wav)
    model = AutoModel.from_pretrained(name).eval()
    with torch.no_grad():
        x = torch.from_numpy(wav.samples.astype(np.float32))[None]
        hidden = model(x, output_hidden_states=True).hidden_states
    layers = np.stack([h[0].numpy() for h in hidden]).astype(np.float32)   # (L, T, D)
    provider_save(out_file, EmbeddingStack(layers, frame_hop_s=0.02))
    print(f"{out_file}: {layers.shape[0]} layers x {layers.shape[1]} frames x {layers.shape[2]} dims")


if __name__ == "__main__":
    main(*sys.argv[1:])
