"""
Overfitting one utterance
=========================

A toy VQ-VAE memorizes 16 MFCC frames. A second run adds temporal smoothing
and jitter to show the regularized objective still converges.
"""
import numpy as np

from trfvq import dsp, fixtures
from trfvq.autodiff import AdamState
from trfvq.models import Batch, TransformerVQVAE, VqVaeConfig, train_step_vqvae

x = dsp.extract(fixtures.utterance("aiu", "spk_low", seg_s=0.06)).data[:16]
toy = dict(input_dims=39, d_mdl=32, heads=4, d_ff=64, code_dim=16, K=16, speaker_dim=8)

for extra in ({}, {"smoothing": 5e-3, "jitter_p": 0.05}):
    model = TransformerVQVAE(VqVaeConfig(**toy, **extra), ["s"], seed=0)
    model.fit_normalization([x])
    adam = AdamState(lr=model.config.lr)
    rng = np.random.default_rng(0)
    batch = Batch(x[None], ["s"])
    print("config:", extra or "plain")
    for step in range(500):
        loss = train_step_vqvae(model, batch, adam, rng)
        if step % 100 == 0 or step == 499:
            print(f"  step {step:3d}  total {loss.total:.4f}  rec {loss.rec:.4f}")
    print("  units:", model.encode_utterance(x).to_text().strip())
