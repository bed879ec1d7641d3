"""
Codes back to sound
==================

A codebook inverter learns to map unit sequences to magnitude spectrograms, and
Griffin-Lim turns those into waveforms. Random codes stand in for a trained
encoder here.
"""
import numpy as np

from trfvq import dsp, fixtures
from trfvq.autodiff import AdamState
from trfvq.models import CodebookInverter, InverterConfig, synthesize, train_step_inverter

w = fixtures.utterance("aiu", "spk_low", seg_s=0.1)
mag, _ = dsp.stft(w)
rng = np.random.default_rng(0)
E = rng.standard_normal((16, 16))
codes = rng.integers(16, size=(mag.frames + 3) // 4)

# each code covers four spectrogram frames, so pad the target to match
target = np.pad(mag.data, [(0, 4 * len(codes) - mag.frames), (0, 0)], mode="edge")
inv = CodebookInverter(InverterConfig(code_dim=16, d_mdl=32, d_ff=64), E)
inv.fit_scale([target])
adam = AdamState(lr=1e-4)
for step in range(500):
    loss = train_step_inverter(inv, codes[None], target[None], adam)
    if step % 100 == 0:
        print(f"step {step:3d}  spectrogram error {loss:.2f}")

out = synthesize(codes, inv, 60)
print(f"{len(codes)} codes -> {len(out)} samples")
sc = dsp.spectral_convergence(dsp.stft(out)[0].data[:mag.frames], mag.data)
print(f"spectral convergence against the original: {sc:.3f}")

# Griffin-Lim on its own, starting from zero phase
t = np.arange(16000) / 16000
sine, _ = dsp.stft(dsp.Waveform(np.sin(2 * np.pi * 440 * t), 16000))
_, errors = dsp.griffin_lim(sine, 60, return_errors=True)
print("sine:", " ".join(f"{e:.3f}" for e in errors[::10]), f"final {errors[-1]:.4f}")
