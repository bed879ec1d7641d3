"""
From waveform to features
=========================

A synthetic vowel string goes through the analysis front end: magnitude STFT,
log-mel energies, and MFCCs with deltas.
"""
import numpy as np

from trfvq import dsp, fixtures

# three vowels from a low-pitched synthetic speaker, 0.16 s each
w = fixtures.utterance("aiu", "spk_low")
print(f"{len(w)} samples, {w.duration_s:.2f} s at {w.sample_rate_hz} Hz")

# 25 ms Hann windows every 10 ms, zero padded to 512 points
mag, phase = dsp.stft(w)
print("magnitude", mag.data.shape, "phase", phase.shape)

mel = dsp.log_mel(mag)
mfcc = dsp.extract(w, "mfcc")
print("log-mel", mel.data.shape, "mfcc + deltas", mfcc.data.shape)

# the vowels differ in their formants, so mean MFCCs per segment separate them
seg = mfcc.frames // 3
for name, chunk in zip("aiu", np.split(mfcc.data[: 3 * seg], 3)):
    print(name, np.round(chunk[:, 1:5].mean(axis=0), 2))

# phase-aware inversion is exact away from the edges
back = dsp.istft(mag, phase)
n = min(len(back), len(w))
print("istft max error", float(np.abs(back.samples[400:n - 400] - w.samples[400:n - 400]).max()))
