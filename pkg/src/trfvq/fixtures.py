"""Deterministic synthetic speech-like corpus for tests, demos and smoke runs.

Each utterance concatenates a few vowel-like segments: a harmonic source at a
speaker-specific pitch shaped by per-phone formant resonances.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .dsp import SAMPLE_RATE, Waveform, write_wav

# (F1, F2, F3) in Hz
PHONES = {
    "a": (730, 1090, 2440),
    "i": (270, 2290, 3010),
    "u": (300, 870, 2240),
    "e": (530, 1840, 2480),
    "o": (570, 840, 2410),
}

SPEAKERS = {"spk_low": 110.0, "spk_high": 210.0}


def vowel(phone: str, f0: float, n_samples: int, rng: np.random.Generator,
          sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    formants = PHONES[phone]
    t = np.arange(n_samples) / sample_rate
    out = np.zeros(n_samples)
    for h in range(1, int((sample_rate / 2 - 200) // f0)):
        f = h * f0
        gain = sum(1.0 / (1.0 + ((f - F) / (0.08 * F + 50.0)) ** 2) for F in formants)
        out += gain / h ** 0.5 * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    return out


def utterance(phones, speaker: str, seg_s: float = 0.16, seed: int = 0) -> Waveform:
    rng = np.random.default_rng(seed)
    f0 = SPEAKERS[speaker]
    n = int(seg_s * SAMPLE_RATE)
    ramp = np.minimum(1.0, np.minimum(np.arange(n), np.arange(n)[::-1]) / 80.0)
    x = np.concatenate([vowel(p, f0, n, rng) * ramp for p in phones])
    x += 1e-3 * rng.standard_normal(x.shape[0])
    x *= 0.5 / np.max(np.abs(x))
    return Waveform(x, SAMPLE_RATE)


DEFAULT_SCRIPT = [
    ("utt0", "spk_low", "aiu"),
    ("utt1", "spk_high", "eoa"),
    ("utt2", "spk_low", "uei"),
    ("utt3", "spk_high", "oia"),
]


def make_fixture_corpus(directory, script=DEFAULT_SCRIPT, seg_s: float = 0.16) -> Path:
    """Write WAV files and a JSON-lines manifest into ``directory``; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    for i, (utt_id, speaker, phones) in enumerate(script):
        w = utterance(phones, speaker, seg_s, seed=i)
        path = directory / f"{utt_id}.wav"
        write_wav(path, w)
        lines.append(json.dumps({"utterance_id": utt_id, "wav_path": path.name,
                                 "speaker_id": speaker, "duration_s": w.duration_s},
                                sort_keys=True))
    manifest = directory / "manifest.jsonl"
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


# small enough to train end to end in seconds on one CPU core
TOY_RUN_CONFIG = {
    "feature_kind": "mfcc", "K": 64, "d_mdl": 32, "heads": 4, "d_ff": 64, "code_dim": 16,
    "speaker_dim": 8, "lr": 1e-3, "steps": 500, "batch_size": 4, "segment_frames": 32,
    "inverter_d_mdl": 32, "inverter_d_ff": 64, "inverter_lr": 1e-3, "inverter_steps": 200,
    "inverter_segment_codes": 8,
}


def write_toy_config(path, **overrides) -> Path:
    path = Path(path)
    path.write_text(json.dumps({**TOY_RUN_CONFIG, **overrides}, indent=1, sort_keys=True) + "\n")
    return path
