"""Codebook inverter: code sequence -> linear magnitude spectrogram."""
from __future__ import annotations

import numpy as np

from .. import dsp
from ..autodiff import (
    ParameterTree,
    Tensor,
    concat,
    conv1d,
    l2_norm,
    linear,
    relu,
    sinusoidal_positional_encoding,
    softplus,
    transformer_block,
)
from ..autodiff import checkpoint as ckpt
from ..autodiff.params import add_conv, add_linear, add_transformer_block
from ..vq import SymbolSequence
from .config import InverterConfig


class CodebookInverter:
    """Two multiscale conv front ends, sinusoidal positions, a Transformer stack
    and a softplus head scaled by ``scale``.

    The codebook table is frozen and copied into the inverter together with its
    content hash, so a synthesizer can refuse a mismatched VQ-VAE.
    """

    def __init__(self, config: InverterConfig, codebook_vectors: np.ndarray, seed: int = 0):
        self.config = config
        E = np.asarray(codebook_vectors)
        if E.ndim != 2 or E.shape[1] != config.code_dim:
            raise ValueError(f"codebook must be K x {config.code_dim}")
        dt = config.np_dtype
        self.codebook = E.astype(dt)
        self.codebook_hash = ckpt.array_hash(E)
        self.scale = np.array(1.0, dtype=dt)
        self.params = _build_params(config, np.random.default_rng(seed), dt)

    def fit_scale(self, spectrograms):
        """Set the output scale to the mean target magnitude."""
        vals = [np.asarray(s.data if isinstance(s, dsp.FeatureMatrix) else s).mean()
                for s in spectrograms]
        self.scale = np.array(max(float(np.mean(vals)), 1e-6), dtype=self.config.np_dtype)

    def embed_codes(self, codes) -> np.ndarray:
        """Look up code vectors and repeat each one ``r`` times consecutively."""
        idx = _indices(codes)
        if idx.shape[-1] == 0:
            raise ValueError("empty code sequence")
        if idx.min() < 0 or idx.max() >= self.codebook.shape[0]:
            raise ValueError("code index outside the codebook")
        return np.repeat(self.codebook[idx], self.config.r, axis=-2)

    def forward(self, codes) -> Tensor:
        """Predicted magnitudes of shape (..., r * T, n_bins)."""
        cfg = self.config
        e = self.embed_codes(codes)
        S = e.shape[-2]
        h = Tensor(e + sinusoidal_positional_encoding(S, cfg.code_dim, cfg.np_dtype))
        p = self.params
        for stage in range(2):
            branches = [conv1d(h, p[f"inv/ms{stage}/k{k}/kernel"], p[f"inv/ms{stage}/k{k}/bias"],
                               stride=1, padding=k // 2) for k in cfg.kernels]
            h = relu(concat(branches, axis=-1))
        for layer in range(cfg.n_layers):
            h = transformer_block(h, p.view(f"inv/layer{layer}"), cfg.heads)
        return softplus(linear(h, p["inv/out/weight"], p["inv/out/bias"])) * self.scale

    __call__ = forward

    def save(self, path, extra_meta: dict | None = None):
        tensors = dict(self.params.state())
        tensors["codebook/E"] = self.codebook
        tensors["norm/scale"] = self.scale
        meta = {"kind": "inverter", "config": self.config.to_dict(),
                "codebook_hash": self.codebook_hash}
        meta.update(extra_meta or {})
        ckpt.save(path, tensors, meta)

    @classmethod
    def load(cls, path) -> tuple["CodebookInverter", dict]:
        tensors, meta = ckpt.load(path)
        if meta.get("kind") != "inverter":
            raise ckpt.CheckpointError(f"{path}: not an inverter checkpoint")
        inv = cls(InverterConfig.from_dict(meta["config"]), tensors["codebook/E"])
        inv.params.load_state({k: v for k, v in tensors.items() if k in inv.params})
        inv.scale = tensors["norm/scale"].astype(inv.config.np_dtype)
        inv.codebook_hash = meta["codebook_hash"]
        return inv, meta


def _indices(codes) -> np.ndarray:
    if isinstance(codes, SymbolSequence):
        return codes.indices
    if isinstance(codes, (list, tuple)) and codes and isinstance(codes[0], SymbolSequence):
        return np.stack([c.indices for c in codes])
    return np.asarray(codes, dtype=np.int64)


def inverter_loss(pred: Tensor, target) -> Tensor:
    """Frobenius norm ``||X - X_hat||`` (not squared); batched inputs average per item."""
    t = target.data if isinstance(target, dsp.FeatureMatrix) else np.asarray(target)
    if tuple(pred.shape) != t.shape:
        raise ValueError(f"prediction {pred.shape} and target {t.shape} differ in shape")
    diff = pred - t.astype(pred.dtype)
    if diff.ndim == 2:
        return l2_norm(diff)
    flat = diff.reshape(-1, *diff.shape[-2:])
    terms = [l2_norm(flat[i]) for i in range(flat.shape[0])]
    total = terms[0]
    for term in terms[1:]:
        total = total + term
    return total * (1.0 / len(terms))


def synthesize(codes, inverter: CodebookInverter, griffin_lim_iters: int = dsp.GRIFFIN_LIM_ITERS):
    """Codes -> magnitude spectrogram -> Griffin-Lim waveform."""
    mag = inverter.forward(codes).values
    if mag.ndim != 2:
        raise ValueError("synthesize takes a single code sequence")
    spec = dsp.FeatureMatrix(mag.astype(np.float64), "linear_magnitude")
    return dsp.griffin_lim(spec, griffin_lim_iters)


def _build_params(cfg: InverterConfig, rng, dt) -> ParameterTree:
    p = ParameterTree()
    d = cfg.d_mdl
    width = d // len(cfg.kernels)
    c_in = cfg.code_dim
    for stage in range(2):
        for k in cfg.kernels:
            add_conv(p, f"inv/ms{stage}/k{k}", c_in, width, k, rng, dt)
        c_in = width * len(cfg.kernels)
    for layer in range(cfg.n_layers):
        add_transformer_block(p, f"inv/layer{layer}", d, cfg.d_ff, rng, dt)
    add_linear(p, "inv/out", d, cfg.n_bins, rng, dt)
    return p
