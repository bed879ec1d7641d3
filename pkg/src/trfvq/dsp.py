"""Audio I/O and signal-processing transforms.

Framing follows a no-padding convention: a waveform of ``N`` samples with a
window of ``W`` samples and hop ``H`` yields ``1 + (N - W) // H`` frames.
All transforms are pure functions of their inputs.
"""
from __future__ import annotations

import json
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.fft import dct

SAMPLE_RATE = 16000
N_FFT = 512
WINDOW_MS = 25.0
HOP_MS = 10.0
N_MELS = 80
N_CEPS = 13
LOG_FLOOR = 1e-10
DELTA_WIDTH = 2
GRIFFIN_LIM_ITERS = 60

FEATURE_KINDS = ("linear_magnitude", "log_mel", "mfcc")


class AudioError(ValueError):
    """Raised for malformed or unsupported audio input."""


@dataclass(frozen=True)
class Waveform:
    """Mono audio at a fixed sample rate."""

    samples: np.ndarray
    sample_rate_hz: int = SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise AudioError("waveform must be one-dimensional (mono)")
        if self.sample_rate_hz <= 0:
            raise AudioError("sample rate must be positive")
        if not np.all(np.isfinite(samples)):
            raise AudioError("waveform contains non-finite samples")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz


@dataclass(frozen=True)
class FeatureMatrix:
    """Time-major feature matrix (frames x dims)."""

    data: np.ndarray
    kind: str
    hop_ms: float = HOP_MS
    window_ms: float = WINDOW_MS

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise ValueError("feature matrix must be 2-D (frames x dims)")
        if self.kind not in FEATURE_KINDS:
            raise ValueError(f"unknown feature kind {self.kind!r}")
        if data.shape[0] < 1:
            raise ValueError("feature matrix needs at least one frame")
        if self.kind == "linear_magnitude" and np.any(data < 0):
            raise ValueError("linear magnitudes must be non-negative")
        object.__setattr__(self, "data", data)

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def dims(self) -> int:
        return self.data.shape[1]


def ms_to_samples(ms: float, sample_rate: int = SAMPLE_RATE) -> int:
    return int(round(ms * sample_rate / 1000.0))


def hann(length: int) -> np.ndarray:
    """Periodic Hann window."""
    n = np.arange(length)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / length)


def num_frames(n_samples: int, win: int, hop: int) -> int:
    if n_samples < win:
        raise AudioError("input too short")
    return 1 + (n_samples - win) // hop


def _check_rate(w: Waveform):
    if w.sample_rate_hz != SAMPLE_RATE:
        raise AudioError(
            f"expected {SAMPLE_RATE} Hz audio, got {w.sample_rate_hz} Hz (no resampling)"
        )


def stft(w: Waveform, window_ms: float = WINDOW_MS, hop_ms: float = HOP_MS,
         n_fft: int = N_FFT) -> tuple[FeatureMatrix, np.ndarray]:
    """Short-time Fourier transform without center padding.

    Returns
    -------
    magnitude : FeatureMatrix
        ``linear_magnitude`` matrix of shape (frames, n_fft // 2 + 1).
    phase : ndarray
        Phase angles in radians, same shape as the magnitude.
    """
    _check_rate(w)
    win = ms_to_samples(window_ms, w.sample_rate_hz)
    hop = ms_to_samples(hop_ms, w.sample_rate_hz)
    if n_fft < win:
        raise ValueError(f"n_fft={n_fft} is smaller than the window ({win} samples)")
    spec = _complex_stft(w.samples, win, hop, n_fft)
    mag = FeatureMatrix(np.abs(spec), "linear_magnitude", hop_ms, window_ms)
    return mag, np.angle(spec)


def _complex_stft(x: np.ndarray, win: int, hop: int, n_fft: int) -> np.ndarray:
    n = num_frames(x.shape[0], win, hop)
    idx = hop * np.arange(n)[:, None] + np.arange(win)[None, :]
    frames = x[idx] * hann(win)
    return np.fft.rfft(frames, n=n_fft, axis=1)


def _overlap_add(spec: np.ndarray, win: int, hop: int, n_fft: int) -> np.ndarray:
    # least-squares inverse: sum(w * y_frame) / sum(w^2)
    window = hann(win)
    frames = np.fft.irfft(spec, n=n_fft, axis=1)[:, :win] * window
    n = spec.shape[0]
    length = (n - 1) * hop + win
    out = np.zeros(length)
    wss = np.zeros(length)
    for i in range(n):
        out[i * hop:i * hop + win] += frames[i]
        wss[i * hop:i * hop + win] += window ** 2
    nz = wss > 0
    out[nz] /= wss[nz]
    return out


def istft(magnitude, phase: np.ndarray, window_ms: float = WINDOW_MS,
          hop_ms: float = HOP_MS, n_fft: int | None = None) -> Waveform:
    """Overlap-add inverse of :func:`stft` with synthesis-window normalization."""
    mag = magnitude.data if isinstance(magnitude, FeatureMatrix) else np.asarray(magnitude)
    phase = np.asarray(phase)
    if mag.shape != phase.shape:
        raise ValueError(f"magnitude {mag.shape} and phase {phase.shape} differ in shape")
    if n_fft is None:
        n_fft = 2 * (mag.shape[1] - 1)
    win = ms_to_samples(window_ms)
    hop = ms_to_samples(hop_ms)
    spec = mag * np.exp(1j * phase)
    return Waveform(_overlap_add(spec, win, hop, n_fft), SAMPLE_RATE)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int = N_MELS, n_fft: int = N_FFT,
                   sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Triangular filters on the HTK mel scale, 0 Hz to Nyquist, peak height 1.

    Returns an array of shape (n_mels, n_fft // 2 + 1).
    """
    n_bins = n_fft // 2 + 1
    if n_mels > n_bins:
        raise ValueError(f"n_mels={n_mels} exceeds the {n_bins} available frequency bins")
    bin_hz = np.linspace(0.0, sample_rate / 2.0, n_bins)
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2))
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bin_hz - lower) / (center - lower)
    falling = (upper - bin_hz) / (upper - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def log_mel(mag: FeatureMatrix, n_mels: int = N_MELS) -> FeatureMatrix:
    """Natural-log mel power spectrogram, floored at ``LOG_FLOOR``."""
    if mag.kind != "linear_magnitude":
        raise ValueError("log_mel expects a linear_magnitude matrix")
    n_fft = 2 * (mag.dims - 1)
    fb = mel_filterbank(n_mels, n_fft)
    mel = (mag.data ** 2) @ fb.T
    return FeatureMatrix(np.log(np.maximum(mel, LOG_FLOOR)), "log_mel",
                         mag.hop_ms, mag.window_ms)


def deltas(c: np.ndarray, width: int = DELTA_WIDTH) -> np.ndarray:
    """Regression deltas along time with edge replication.

    ``d_t = sum_n n (c_{t+n} - c_{t-n}) / (2 sum_n n^2)`` for n = 1..width.
    """
    c = np.asarray(c, dtype=np.float64)
    T = c.shape[0]
    padded = np.concatenate([np.repeat(c[:1], width, 0), c, np.repeat(c[-1:], width, 0)])
    num = np.zeros_like(c)
    for n in range(1, width + 1):
        num += n * (padded[width + n:width + n + T] - padded[width - n:width - n + T])
    return num / (2.0 * sum(n * n for n in range(1, width + 1)))


def mfcc_with_deltas(mel: FeatureMatrix, n_ceps: int = N_CEPS) -> FeatureMatrix:
    """13 cepstra from an orthonormal DCT-II, plus first and second deltas (39 dims)."""
    if mel.kind != "log_mel":
        raise ValueError("mfcc_with_deltas expects a log_mel matrix")
    if mel.frames < 1:
        raise ValueError("need at least one frame")
    ceps = dct(mel.data, type=2, norm="ortho", axis=1)[:, :n_ceps]
    d1 = deltas(ceps)
    d2 = deltas(d1)
    return FeatureMatrix(np.hstack([ceps, d1, d2]), "mfcc", mel.hop_ms, mel.window_ms)


def spectral_convergence(mag: np.ndarray, target: np.ndarray) -> float:
    denom = np.linalg.norm(target)
    if denom == 0:
        return 0.0 if np.linalg.norm(mag) == 0 else np.inf
    return float(np.linalg.norm(mag - target) / denom)


def griffin_lim(mag: FeatureMatrix, n_iters: int = GRIFFIN_LIM_ITERS,
                window_ms: float = WINDOW_MS, hop_ms: float = HOP_MS,
                return_errors: bool = False):
    """Estimate a waveform from a magnitude spectrogram by alternating projections.

    Phase starts at zero. Every iteration inverts the current complex estimate,
    re-analyses the waveform and keeps only the new phase.

    Parameters
    ----------
    mag : FeatureMatrix
        Target ``linear_magnitude`` spectrogram.
    n_iters : int
        Number of projection rounds (at least 1).
    return_errors : bool
        Also return the spectral convergence after each round.
    """
    data = mag.data if isinstance(mag, FeatureMatrix) else np.asarray(mag, dtype=np.float64)
    if isinstance(mag, FeatureMatrix) and mag.kind != "linear_magnitude":
        raise ValueError("griffin_lim expects a linear_magnitude matrix")
    if np.any(data < 0):
        raise ValueError("magnitudes must be non-negative")
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    win = ms_to_samples(window_ms)
    hop = ms_to_samples(hop_ms)
    n_fft = 2 * (data.shape[1] - 1)

    phase = np.zeros_like(data)
    errors = []
    for _ in range(n_iters):
        x = _overlap_add(data * np.exp(1j * phase), win, hop, n_fft)
        rebuilt = _complex_stft(x, win, hop, n_fft)
        errors.append(spectral_convergence(np.abs(rebuilt), data))
        phase = np.angle(rebuilt)
    out = Waveform(_overlap_add(data * np.exp(1j * phase), win, hop, n_fft), SAMPLE_RATE)
    if return_errors:
        return out, errors
    return out


def extract(w: Waveform, kind: str = "mfcc") -> FeatureMatrix:
    """Run the full feature pipeline for ``kind`` (``mfcc``, ``log_mel`` or ``linear_magnitude``)."""
    mag, _ = stft(w)
    if kind == "linear_magnitude":
        return mag
    mel = log_mel(mag)
    if kind == "log_mel":
        return mel
    if kind == "mfcc":
        return mfcc_with_deltas(mel)
    raise ValueError(f"unknown feature kind {kind!r}")


# -- file formats -------------------------------------------------------------

def read_wav(path) -> Waveform:
    """Read a 16-bit PCM mono 16 kHz WAV file into [-1, 1) floats."""
    try:
        with wave.open(str(path), "rb") as fh:
            channels, width, rate = fh.getnchannels(), fh.getsampwidth(), fh.getframerate()
            raw = fh.readframes(fh.getnframes())
    except (wave.Error, EOFError) as exc:
        raise AudioError(f"{path}: not a readable WAV file ({exc})") from exc
    if channels != 1:
        raise AudioError(f"{path}: expected mono, got {channels} channels")
    if width != 2:
        raise AudioError(f"{path}: expected 16-bit PCM, got {8 * width}-bit")
    if rate != SAMPLE_RATE:
        raise AudioError(f"{path}: expected {SAMPLE_RATE} Hz, got {rate} Hz")
    pcm = np.frombuffer(raw, dtype="<i2")
    return Waveform(pcm.astype(np.float64) / 32768.0, rate)


def write_wav(path, w: Waveform):
    """Write 16-bit PCM mono; samples are clipped to [-1, 1]."""
    pcm = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(w.sample_rate_hz)
        fh.writeframes(pcm.tobytes())


def write_features(path, feats: FeatureMatrix):
    """Write raw little-endian float32 frames plus a ``.json`` sidecar."""
    path = Path(path)
    path.write_bytes(np.ascontiguousarray(feats.data, dtype="<f4").tobytes())
    meta = {"frames": feats.frames, "dims": feats.dims, "kind": feats.kind,
            "hop_ms": float(feats.hop_ms), "window_ms": float(feats.window_ms)}
    sidecar_path(path).write_text(json.dumps(meta, sort_keys=True) + "\n")


def read_features(path) -> FeatureMatrix:
    path = Path(path)
    meta = json.loads(sidecar_path(path).read_text())
    data = np.frombuffer(path.read_bytes(), dtype="<f4")
    expected = meta["frames"] * meta["dims"]
    if data.size != expected:
        raise ValueError(f"{path}: payload has {data.size} values, sidecar says {expected}")
    return FeatureMatrix(data.reshape(meta["frames"], meta["dims"]).astype(np.float64),
                         meta["kind"], meta["hop_ms"], meta["window_ms"])


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")
