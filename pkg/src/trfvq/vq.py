"""Codebook quantization, EMA codebook learning and the latent regularizers."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, ensure_tensor, square_sum, stop_gradient, straight_through

EMA_DECAY = 0.99
LAPLACE_EPS = 1e-5
COMMITMENT_GAMMA = 0.25


@dataclass
class Codebook:
    """K x D_e code vectors plus the EMA statistics that re-estimate them.

    Attributes
    ----------
    vectors : ndarray
        The code table ``E``.
    ema_cluster_size : ndarray
        Decayed assignment counts, shape (K,).
    ema_sum : ndarray
        Decayed sums of assigned encoder outputs, shape (K, D_e).
    """

    vectors: np.ndarray
    ema_cluster_size: np.ndarray | None = None
    ema_sum: np.ndarray | None = None
    decay: float = EMA_DECAY
    laplace_eps: float = LAPLACE_EPS
    initialized: bool = True

    def __post_init__(self):
        vecs = np.array(self.vectors)
        self.vectors = vecs if vecs.dtype in (np.float32, np.float64) else vecs.astype(np.float32)
        if self.vectors.ndim != 2 or self.vectors.shape[0] < 2:
            raise ValueError("codebook needs a 2-D table with K >= 2 rows")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("codebook vectors must be finite")
        if not 0.0 <= self.decay < 1.0:
            raise ValueError("decay must lie in [0, 1)")
        if self.ema_cluster_size is None:
            self.ema_cluster_size = np.ones(self.K, dtype=self.vectors.dtype)
        if self.ema_sum is None:
            self.ema_sum = self.vectors * self.ema_cluster_size[:, None]
        self.ema_cluster_size = np.asarray(self.ema_cluster_size, dtype=self.vectors.dtype)
        self.ema_sum = np.asarray(self.ema_sum, dtype=self.vectors.dtype)

    @property
    def K(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @classmethod
    def empty(cls, K: int, dim: int, dtype=np.float32, **kw) -> "Codebook":
        """A placeholder table, to be filled by :meth:`init_from_samples`."""
        return cls(np.zeros((K, dim), dtype=dtype), initialized=False, **kw)

    def init_from_samples(self, Z: np.ndarray, rng: np.random.Generator):
        """Seed the table with rows drawn from encoder outputs ``Z`` (N x D_e)."""
        Z = np.asarray(Z, dtype=self.vectors.dtype).reshape(-1, self.dim)
        replace = Z.shape[0] < self.K
        rows = rng.choice(Z.shape[0], size=self.K, replace=replace)
        vecs = Z[rows].copy()
        if replace:
            # duplicated rows would tie forever; nudge them apart
            scale = 1e-3 * max(float(np.std(Z)), 1e-3 * float(np.abs(Z).max()), 1e-4)
            vecs += scale * rng.standard_normal(vecs.shape).astype(vecs.dtype)
        self.vectors = vecs
        self.ema_cluster_size = np.ones(self.K, dtype=vecs.dtype)
        self.ema_sum = vecs.copy()
        self.initialized = True

    def copy(self) -> "Codebook":
        return Codebook(self.vectors.copy(), self.ema_cluster_size.copy(), self.ema_sum.copy(),
                        self.decay, self.laplace_eps, self.initialized)


@dataclass
class SymbolSequence:
    """Discovered unit indices for one utterance."""

    indices: np.ndarray
    frame_hop_ms: float = 40.0

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64).reshape(-1)

    def __len__(self):
        return self.indices.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) * self.frame_hop_ms / 1000.0

    def to_text(self) -> str:
        return " ".join(str(int(i)) for i in self.indices) + "\n"

    @classmethod
    def from_text(cls, text: str, frame_hop_ms: float = 40.0) -> "SymbolSequence":
        return cls(np.array([int(tok) for tok in text.split()], dtype=np.int64), frame_hop_ms)


@dataclass
class QuantizationResult:
    indices: np.ndarray
    quantized: Tensor
    commitment: Tensor = field(default=None)


def _table(cb) -> np.ndarray:
    if isinstance(cb, Codebook):
        return cb.vectors
    if isinstance(cb, Tensor):
        return cb.values
    return np.asarray(cb)


def squared_distances(Z: np.ndarray, E: np.ndarray) -> np.ndarray:
    """Pairwise squared L2 distances, shape (..., K)."""
    diff = Z[..., None, :] - E
    return np.einsum("...kd,...kd->...k", diff, diff)


def nearest_codes(Z: np.ndarray, cb) -> np.ndarray:
    """Per-row argmin of the L2 distance; ties go to the lowest index."""
    E = _table(cb)
    Z = np.asarray(Z)
    if Z.shape[-1] != E.shape[1]:
        raise ValueError(f"latent dim {Z.shape[-1]} != codebook dim {E.shape[1]}")
    if not np.all(np.isfinite(Z)):
        raise ValueError("latent vectors must be finite")
    return np.argmin(squared_distances(Z, E), axis=-1)


def nearest_code(z: np.ndarray, cb) -> int:
    z = np.asarray(z)
    if z.ndim != 1:
        raise ValueError("nearest_code takes a single vector")
    return int(nearest_codes(z[None], cb)[0])


def commitment_loss(Z: Tensor, cb, indices: np.ndarray, gamma: float = COMMITMENT_GAMMA) -> Tensor:
    """``gamma * sum_t ||z_t - sg(e_{c_t})||^2``.

    ``cb`` may be a :class:`Codebook`, an array, or a tensor; in the last case
    it receives an all-zero gradient.
    """
    Z = ensure_tensor(Z)
    E = cb if isinstance(cb, Tensor) else Tensor(np.asarray(_table(cb), dtype=Z.dtype))
    target = stop_gradient(E)[np.asarray(indices)]
    return square_sum(Z - target) * gamma


def quantize_sequence(Z: Tensor, cb, gamma: float = COMMITMENT_GAMMA) -> QuantizationResult:
    """Snap every frame of ``Z`` (..., T, D_e) to its nearest code.

    The quantized tensor equals ``E[c_t]`` exactly while passing its gradient
    straight through to ``Z``.
    """
    Z = ensure_tensor(Z)
    if Z.ndim < 2 or Z.shape[-2] < 1:
        raise ValueError("need at least one frame to quantize")
    idx = nearest_codes(Z.values, cb)
    E = _table(cb)
    quantized = straight_through(Z, E[idx])
    return QuantizationResult(idx, quantized, commitment_loss(Z, cb, idx, gamma))


def ema_update(cb: Codebook, Z: np.ndarray, indices: np.ndarray) -> Codebook:
    """Re-estimate code vectors by exponential moving averages, in place.

    Cluster sizes are Laplace-smoothed before division so codes that stop
    receiving frames never divide by zero.
    """
    Z = np.asarray(Z, dtype=cb.vectors.dtype).reshape(-1, cb.dim)
    indices = np.asarray(indices).reshape(-1)
    if indices.size == 0:
        return cb
    if indices.shape[0] != Z.shape[0]:
        raise ValueError("one index per latent frame is required")
    onehot = np.zeros((indices.size, cb.K), dtype=cb.vectors.dtype)
    onehot[np.arange(indices.size), indices] = 1.0
    counts = onehot.sum(axis=0)
    sums = onehot.T @ Z
    d = cb.decay
    cb.ema_cluster_size = d * cb.ema_cluster_size + (1.0 - d) * counts
    cb.ema_sum = d * cb.ema_sum + (1.0 - d) * sums
    n = cb.ema_cluster_size.sum()
    if n <= 0:
        return cb
    smoothed = (cb.ema_cluster_size + cb.laplace_eps) / (n + cb.K * cb.laplace_eps) * n
    cb.vectors = (cb.ema_sum / smoothed[:, None]).astype(cb.vectors.dtype)
    return cb


def temporal_smoothing_loss(Z: Tensor) -> Tensor:
    """``sum_t ||z_t - z_{t+1}||^2`` along the time axis (second to last)."""
    Z = ensure_tensor(Z)
    if Z.shape[-2] < 2:
        return Z.sum() * 0.0
    return square_sum(Z[..., 1:, :] - Z[..., :-1, :])


def temporal_jitter(indices, p: float, rng) -> np.ndarray:
    """Swap codes with a neighbour: left w.p. ``p``, right w.p. ``p``.

    Replacements read the original sequence, so swaps never cascade. Boundary
    frames whose drawn neighbour does not exist keep their code.
    ``rng`` is a seed or a :class:`numpy.random.Generator`.
    """
    if not 0.0 <= p <= 0.5:
        raise ValueError("jitter probability must lie in [0, 0.5]")
    rng = np.random.default_rng(rng)
    if isinstance(indices, SymbolSequence):
        return SymbolSequence(temporal_jitter(indices.indices, p, rng), indices.frame_hop_ms)
    c = np.asarray(indices)
    if p == 0.0 or c.shape[-1] == 0:
        return c.copy()
    draw = rng.random(c.shape)
    out = c.copy()
    left = draw < p
    right = (draw >= p) & (draw < 2 * p)
    left[..., 0] = False
    right[..., -1] = False
    out[..., 1:][left[..., 1:]] = c[..., :-1][left[..., 1:]]
    out[..., :-1][right[..., :-1]] = c[..., 1:][right[..., :-1]]
    return out
