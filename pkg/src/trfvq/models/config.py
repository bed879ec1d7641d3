from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

SUPPORTED_K = (64, 128, 256, 512)


@dataclass
class VqVaeConfig:
    """Hyper-parameters of the Transformer VQ-VAE.

    ``K`` may be any size >= 2 here; run configs restrict it to ``SUPPORTED_K``.
    """

    input_dims: int = 39
    d_mdl: int = 128
    heads: int = 4
    d_ff: int = 256
    code_dim: int = 64
    K: int = 128
    total_stride: int = 4
    gamma: float = 0.25
    smoothing: float = 0.0
    jitter_p: float = 0.0
    speaker_dim: int = 32
    layers_per_block: int = 2
    decoder_kernel: int = 3
    ema_decay: float = 0.99
    laplace_eps: float = 1e-5
    lr: float = 1e-4
    dtype: str = "float32"

    def __post_init__(self):
        self.validate()

    @property
    def n_down(self) -> int:
        return int(np.log2(self.total_stride))

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    def validate(self):
        if self.input_dims < 1 or self.code_dim < 1 or self.speaker_dim < 1:
            raise ValueError("dimensions must be positive")
        if self.d_mdl % self.heads:
            raise ValueError(f"d_mdl={self.d_mdl} is not divisible by heads={self.heads}")
        if self.K < 2:
            raise ValueError("codebook needs K >= 2")
        s = self.total_stride
        if s < 2 or s & (s - 1):
            raise ValueError("total_stride must be a power of two (a product of stride-2 convs)")
        if not 0.0 <= self.jitter_p <= 0.5:
            raise ValueError("jitter_p must lie in [0, 0.5]")
        if self.smoothing < 0 or self.gamma < 0:
            raise ValueError("loss coefficients must be non-negative")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "VqVaeConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass
class InverterConfig:
    code_dim: int = 64
    d_mdl: int = 128
    heads: int = 4
    d_ff: int = 256
    n_layers: int = 3
    kernels: tuple = (3, 5)
    n_bins: int = 257
    r: int = 4
    lr: float = 1e-4
    dtype: str = "float32"

    def __post_init__(self):
        self.kernels = tuple(self.kernels)
        if self.d_mdl % self.heads:
            raise ValueError(f"d_mdl={self.d_mdl} is not divisible by heads={self.heads}")
        if self.d_mdl % len(self.kernels):
            raise ValueError("d_mdl must split evenly across the multiscale branches")
        if self.code_dim % 2:
            raise ValueError("code_dim must be even for the positional encoding")
        if any(k % 2 == 0 for k in self.kernels):
            raise ValueError("multiscale kernels must be odd to keep sequence length")
        if self.r < 1:
            raise ValueError("r must be >= 1")

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kernels"] = list(self.kernels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "InverterConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})
