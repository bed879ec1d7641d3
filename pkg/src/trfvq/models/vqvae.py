"""Transformer VQ-VAE: strided Transformer encoder, EMA codebook, speaker-conditioned decoder."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import dsp
from ..autodiff import (
    ParameterTree,
    Tensor,
    concat,
    conv1d,
    linear,
    relu,
    transformer_block,
    upsample_repeat,
)
from ..autodiff import checkpoint as ckpt
from ..autodiff.params import add_conv, add_linear, add_transformer_block
from ..vq import Codebook, SymbolSequence, nearest_codes
from .config import VqVaeConfig

DOWN_KERNEL = 4


class UtteranceTooShort(ValueError):
    pass


@dataclass
class SpeakerTable:
    """Maps speaker names to rows of the learned embedding matrix ``speakers/V``."""

    names: list

    def __post_init__(self):
        self.names = [str(n) for n in self.names]
        if len(set(self.names)) != len(self.names):
            raise ValueError("speaker names must be unique")
        self._rows = {n: i for i, n in enumerate(self.names)}

    def __len__(self):
        return len(self.names)

    def row(self, speaker) -> int:
        if isinstance(speaker, (int, np.integer)) and not isinstance(speaker, bool):
            if 0 <= speaker < len(self.names):
                return int(speaker)
            raise KeyError(f"unknown speaker row {speaker}")
        try:
            return self._rows[str(speaker)]
        except KeyError:
            raise KeyError(f"unknown speaker {speaker!r}") from None


class TransformerVQVAE:
    """Encoder, codebook and decoder with parameters in one :class:`ParameterTree`.

    Features are standardized with per-dimension statistics stored on the model;
    the decoder reconstructs in that standardized space.
    """

    def __init__(self, config: VqVaeConfig, speakers, seed: int = 0):
        self.config = config
        self.speakers = speakers if isinstance(speakers, SpeakerTable) else SpeakerTable(speakers)
        if len(self.speakers) < 1:
            raise ValueError("need at least one speaker")
        dt = config.np_dtype
        rng = np.random.default_rng(seed)
        self.params = _build_params(config, len(self.speakers), rng, dt)
        self.codebook = Codebook.empty(config.K, config.code_dim, dtype=dt,
                                       decay=config.ema_decay, laplace_eps=config.laplace_eps)
        self.feature_mean = np.zeros(config.input_dims, dtype=dt)
        self.feature_std = np.ones(config.input_dims, dtype=dt)

    # -- normalization -----------------------------------------------------
    def fit_normalization(self, features):
        stacked = np.concatenate([np.asarray(f.data if isinstance(f, dsp.FeatureMatrix) else f)
                                  for f in features], axis=0)
        dt = self.config.np_dtype
        self.feature_mean = stacked.mean(axis=0).astype(dt)
        self.feature_std = np.maximum(stacked.std(axis=0), 1e-5).astype(dt)

    def normalize(self, x) -> np.ndarray:
        x = np.asarray(x.data if isinstance(x, dsp.FeatureMatrix) else x)
        return ((x - self.feature_mean) / self.feature_std).astype(self.config.np_dtype)

    def denormalize(self, x) -> np.ndarray:
        return np.asarray(x) * self.feature_std + self.feature_mean

    # -- forward passes ------------------------------------------------------
    def padded_length(self, T: int) -> int:
        s = self.config.total_stride
        return s * math.ceil(T / s)

    def encoder_forward(self, x) -> Tensor:
        """Map raw features (..., T, input_dims) to latents (..., ceil(T/4), D_e).

        The input is standardized, then edge-padded on the right to a multiple
        of the total stride.
        """
        cfg = self.config
        x = self.normalize(x)
        if x.shape[-1] != cfg.input_dims:
            raise ValueError(f"expected {cfg.input_dims}-d features, got {x.shape[-1]}")
        T = x.shape[-2]
        if T < cfg.total_stride:
            raise UtteranceTooShort(
                f"utterance too short: {T} frames < stride {cfg.total_stride}")
        pad = self.padded_length(T) - T
        if pad:
            widths = [(0, 0)] * (x.ndim - 2) + [(0, pad), (0, 0)]
            x = np.pad(x, widths, mode="edge")
        p = self.params
        h = linear(Tensor(x), p["enc/in/weight"], p["enc/in/bias"])
        for b in range(cfg.n_down):
            for layer in range(cfg.layers_per_block):
                h = transformer_block(h, p.view(f"enc/block{b}/layer{layer}"), cfg.heads)
            h = conv1d(h, p[f"enc/block{b}/down/kernel"], p[f"enc/block{b}/down/bias"],
                       stride=2, padding=1)
        return linear(h, p["enc/out/weight"], p["enc/out/bias"])

    def decoder_forward(self, quantized, speaker, length: int | None = None) -> Tensor:
        """Reconstruct standardized features from code vectors and speaker identity.

        ``speaker`` is one id, or a sequence of ids matching the batch axis.
        The output is truncated to ``length`` frames when given.
        """
        cfg = self.config
        q = quantized if isinstance(quantized, Tensor) else Tensor(
            np.asarray(quantized, dtype=cfg.np_dtype))
        p = self.params
        if q.ndim == 2:
            rows = np.array(self.speakers.row(speaker))
        else:
            ids = [speaker] * q.shape[0] if isinstance(speaker, (str, int)) else list(speaker)
            if len(ids) != q.shape[0]:
                raise ValueError("one speaker id per batch item is required")
            rows = np.array([self.speakers.row(s) for s in ids])
        v = p["speakers/V"][rows]                      # (..., D_v)
        v = v.reshape(*v.shape[:-1], 1, v.shape[-1]).broadcast_to(
            q.shape[:-1] + (cfg.speaker_dim,))
        h = concat([q, v], axis=-1)
        k = cfg.decoder_kernel
        for b in range(cfg.n_down):
            h = relu(conv1d(h, p[f"dec/block{b}/conv/kernel"], p[f"dec/block{b}/conv/bias"],
                            stride=1, padding=k // 2))
            h = upsample_repeat(h, 2)
        out = conv1d(h, p["dec/out/kernel"], p["dec/out/bias"], stride=1, padding=k // 2)
        if length is not None and length < out.shape[-2]:
            out = out[..., :length, :]
        return out

    def encode_utterance(self, x, hop_ms: float | None = None) -> SymbolSequence:
        """Nearest-code indices for one utterance (no jitter)."""
        if not self.codebook.initialized:
            raise RuntimeError("codebook has not been initialized; train the model first")
        if hop_ms is None:
            hop_ms = x.hop_ms if isinstance(x, dsp.FeatureMatrix) else dsp.HOP_MS
        z = self.encoder_forward(x).values
        return SymbolSequence(nearest_codes(z, self.codebook),
                              hop_ms * self.config.total_stride)

    # -- persistence ------------------------------------------------------------
    def codebook_hash(self) -> str:
        return ckpt.array_hash(self.codebook.vectors)

    def state_tensors(self) -> dict:
        tensors = dict(self.params.state())
        tensors["codebook/E"] = self.codebook.vectors
        tensors["codebook/ema_size"] = self.codebook.ema_cluster_size
        tensors["codebook/ema_sum"] = self.codebook.ema_sum
        tensors["norm/mean"] = self.feature_mean
        tensors["norm/std"] = self.feature_std
        return tensors

    def save(self, path, extra_meta: dict | None = None):
        meta = {"kind": "vqvae", "config": self.config.to_dict(),
                "speakers": self.speakers.names, "codebook_hash": self.codebook_hash()}
        meta.update(extra_meta or {})
        ckpt.save(path, self.state_tensors(), meta)

    @classmethod
    def load(cls, path) -> tuple["TransformerVQVAE", dict]:
        tensors, meta = ckpt.load(path)
        if meta.get("kind") != "vqvae":
            raise ckpt.CheckpointError(f"{path}: not a VQ-VAE checkpoint")
        model = cls(VqVaeConfig.from_dict(meta["config"]), meta["speakers"])
        dt = model.config.np_dtype
        model.params.load_state({k: v for k, v in tensors.items() if k in model.params})
        model.codebook = Codebook(tensors["codebook/E"].astype(dt),
                                  tensors["codebook/ema_size"].astype(dt),
                                  tensors["codebook/ema_sum"].astype(dt),
                                  model.config.ema_decay, model.config.laplace_eps)
        model.feature_mean = tensors["norm/mean"].astype(dt)
        model.feature_std = tensors["norm/std"].astype(dt)
        return model, meta


def _build_params(cfg: VqVaeConfig, n_speakers: int, rng, dt) -> ParameterTree:
    p = ParameterTree()
    d = cfg.d_mdl
    add_linear(p, "enc/in", cfg.input_dims, d, rng, dt)
    for b in range(cfg.n_down):
        for layer in range(cfg.layers_per_block):
            add_transformer_block(p, f"enc/block{b}/layer{layer}", d, cfg.d_ff, rng, dt)
        add_conv(p, f"enc/block{b}/down", d, d, DOWN_KERNEL, rng, dt)
    add_linear(p, "enc/out", d, cfg.code_dim, rng, dt)
    p.add("speakers/V", rng.standard_normal((n_speakers, cfg.speaker_dim)).astype(dt))
    c_in = cfg.code_dim + cfg.speaker_dim
    for b in range(cfg.n_down):
        add_conv(p, f"dec/block{b}/conv", c_in, d, cfg.decoder_kernel, rng, dt)
        c_in = d
    add_conv(p, "dec/out", d, cfg.input_dims, cfg.decoder_kernel, rng, dt)
    return p
