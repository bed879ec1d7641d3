"""Bitrate, machine ABX via DTW, and codebook usage statistics."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .vq import SymbolSequence


@dataclass(frozen=True)
class BitrateReport:
    total_symbols: int
    total_duration_s: float
    entropy_bits: float
    bitrate: float


def _symbols(seq) -> np.ndarray:
    return seq.indices if isinstance(seq, SymbolSequence) else np.asarray(seq).reshape(-1)


def entropy_bits(counts) -> float:
    counts = np.asarray([c for c in counts if c > 0], dtype=np.float64)
    if counts.size == 0:
        return 0.0
    p = counts / counts.sum()
    h = -np.sum(p * np.log2(p))
    return float(max(h, 0.0))


def bitrate(transcriptions, durations_s) -> BitrateReport:
    """Corpus-level symbol entropy times symbol rate, in bits per second."""
    transcriptions = list(transcriptions)
    durations = np.asarray(list(durations_s), dtype=np.float64)
    if not transcriptions:
        raise ValueError("empty corpus")
    if durations.shape[0] != len(transcriptions):
        raise ValueError("one duration per transcription is required")
    if np.any(durations <= 0):
        raise ValueError("durations must be positive")
    counts = Counter()
    for seq in transcriptions:
        counts.update(_symbols(seq).tolist())
    M = sum(counts.values())
    if M == 0:
        raise ValueError("empty corpus")
    D = float(durations.sum())
    H = entropy_bits(counts.values())
    return BitrateReport(M, D, H, M / D * H)


@dataclass(frozen=True)
class UsageReport:
    counts: np.ndarray
    perplexity: float
    dead_codes: int


def codebook_usage(transcriptions, K: int) -> UsageReport:
    counts = np.zeros(K, dtype=np.int64)
    for seq in transcriptions:
        idx = _symbols(seq)
        if idx.size and (idx.min() < 0 or idx.max() >= K):
            raise ValueError(f"symbol outside [0, {K})")
        counts += np.bincount(idx, minlength=K)
    return UsageReport(counts, float(2.0 ** entropy_bits(counts)), int(np.sum(counts == 0)))


def cosine_distance_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``1 - cos`` between all frame pairs; any pair touching a zero-norm frame scores 1."""
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    denom = np.outer(na, nb)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = (a @ b.T) / denom
    d = 1.0 - cos
    d[denom == 0] = 1.0
    return np.clip(d, 0.0, 2.0)


def dtw_distance(a, b, frame_dist=None) -> float:
    """DTW cost with steps (1,0), (0,1), (1,1), normalized by the path length.

    Among minimum-cost alignments, the shortest one sets the normalizer.
    ``frame_dist(a, b)`` must return the full (T_a x T_b) cost matrix; the
    default is cosine distance.
    """
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("sequences must be non-empty")
    if a.shape[1] != b.shape[1]:
        raise ValueError("frame dimensions differ")
    cost = (frame_dist or cosine_distance_matrix)(a, b)
    n, m = cost.shape
    acc = np.full((n + 1, m + 1), np.inf)
    length = np.zeros((n + 1, m + 1), dtype=np.int64)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            best, best_len = acc[i - 1, j - 1], length[i - 1, j - 1]
            for c, ln in ((acc[i - 1, j], length[i - 1, j]), (acc[i, j - 1], length[i, j - 1])):
                if c < best or (c == best and ln < best_len):
                    best, best_len = c, ln
            acc[i, j] = best + cost[i - 1, j - 1]
            length[i, j] = best_len + 1
    return float(acc[n, m] / length[n, m])


def abx_error_rate(triplets, embed=None, distance=dtw_distance) -> float:
    """Percentage of (A, B, X) triplets where X is closer to B than to A.

    Exact ties count as half an error. ``embed`` maps an item to a frame
    matrix; items are used as-is when it is omitted.
    """
    triplets = list(triplets)
    if not triplets:
        raise ValueError("no triplets")
    embed = embed or (lambda item: item)
    errors = 0.0
    for a, b, x in triplets:
        ex = embed(x)
        dax = distance(embed(a), ex)
        dbx = distance(embed(b), ex)
        errors += 0.0 if dax < dbx else 1.0 if dax > dbx else 0.5
    return 100.0 * errors / len(triplets)


def make_triplets(labels, rng, n: int):
    """Sample ``n`` index triplets (a, b, x) with label[a] == label[x] != label[b], a != x."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(rng)
    by_label = {lab: np.flatnonzero(labels == lab) for lab in np.unique(labels)}
    usable = [lab for lab, ix in by_label.items() if ix.size >= 2]
    if not usable or len(by_label) < 2:
        raise ValueError("need a category with two items and at least two categories")
    out = []
    for _ in range(n):
        lab = usable[rng.integers(len(usable))]
        a, x = rng.choice(by_label[lab], size=2, replace=False)
        others = np.flatnonzero(labels != lab)
        out.append((int(a), int(others[rng.integers(others.size)]), int(x)))
    return out
