"""Objectives and single optimization steps for both models."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import AdamState, NonFiniteError, Tensor, adam_step, square_sum, straight_through
from ..vq import (
    commitment_loss,
    ema_update,
    nearest_codes,
    temporal_jitter,
    temporal_smoothing_loss,
)
from .inverter import CodebookInverter, inverter_loss
from .vqvae import TransformerVQVAE


class DivergenceError(FloatingPointError):
    """Training produced a non-finite loss or gradient."""


@dataclass
class LossComponents:
    total: float
    rec: float
    commit: float
    smooth: float

    def as_row(self) -> list:
        return [self.total, self.rec, self.commit, self.smooth]


@dataclass
class Batch:
    """Equal-length feature segments (B, T, D) with one speaker id per item."""

    features: np.ndarray
    speakers: list

    def __post_init__(self):
        self.features = np.asarray(self.features)
        if self.features.ndim == 2:
            self.features = self.features[None]
        if len(self.speakers) != self.features.shape[0]:
            raise ValueError("one speaker id per batch item is required")


def vqvae_loss(x, x_hat: Tensor, Z: Tensor, cb, indices, gamma: float = 0.25,
               smoothing: float = 0.0) -> tuple[Tensor, dict]:
    """Reconstruction + commitment + smoothing.

    Every term is summed over frames (and dims) of each utterance, then
    averaged over the batch. The reconstruction term is the unit-variance
    Gaussian negative log-likelihood without constants, i.e. a squared error.

    Returns the total as a tensor and each component as a tensor in a dict.
    """
    x = np.asarray(x, dtype=x_hat.dtype)
    if x.shape != x_hat.shape:
        raise ValueError(f"target {x.shape} and reconstruction {x_hat.shape} differ in shape")
    B = x.shape[0] if x.ndim == 3 else 1
    rec = square_sum(x_hat - x) * (1.0 / B)
    commit = commitment_loss(Z, cb, indices, gamma) * (1.0 / B)
    smooth = temporal_smoothing_loss(Z) * (1.0 / B)
    total = rec + commit
    if smoothing:
        total = total + smooth * smoothing
    return total, {"rec": rec, "commit": commit, "smooth": smooth}


def forward_vqvae(model: TransformerVQVAE, batch: Batch, rng=None, jitter: bool = True):
    """Encoder -> quantize -> optional jitter -> decoder. Initializes the codebook if needed."""
    cfg = model.config
    Z = model.encoder_forward(batch.features)
    if not model.codebook.initialized:
        model.codebook.init_from_samples(Z.values, np.random.default_rng(rng))
    idx = nearest_codes(Z.values, model.codebook)
    used = idx
    if jitter and cfg.jitter_p > 0:
        used = temporal_jitter(idx, cfg.jitter_p, rng)
    quantized = straight_through(Z, model.codebook.vectors[used])
    T = batch.features.shape[-2]
    x_hat = model.decoder_forward(quantized, batch.speakers, length=T)
    return Z, idx, x_hat


def train_step_vqvae(model: TransformerVQVAE, batch: Batch, adam: AdamState,
                     rng: np.random.Generator) -> LossComponents:
    """One Adam step on encoder, decoder and speaker table, then one EMA codebook update.

    The codebook never sees an optimizer gradient; ``ema_update`` receives the
    un-jittered assignments.
    """
    cfg = model.config
    model.params.zero_grad()
    try:
        Z, idx, x_hat = forward_vqvae(model, batch, rng)
        target = model.normalize(batch.features)
        total, parts = vqvae_loss(target, x_hat, Z, model.codebook, idx, cfg.gamma, cfg.smoothing)
        total.backward()
    except NonFiniteError as exc:
        raise DivergenceError(f"non-finite value at step {adam.step + 1}: {exc}") from exc
    for name, t in model.params.items():
        if t.grad is None:
            t.grad = np.zeros_like(t.values)
        elif not np.all(np.isfinite(t.grad)):
            raise DivergenceError(f"non-finite gradient for {name} at step {adam.step + 1}")
    adam_step(model.params, adam)
    ema_update(model.codebook, Z.values, idx)
    return LossComponents(float(total.values), float(parts["rec"].values),
                          float(parts["commit"].values), float(parts["smooth"].values))


def train_step_inverter(inverter: CodebookInverter, codes: np.ndarray, targets: np.ndarray,
                        adam: AdamState) -> float:
    """One Adam step on the inverter; the copied codebook stays frozen."""
    inverter.params.zero_grad()
    try:
        loss = inverter_loss(inverter.forward(codes), targets)
        loss.backward()
    except NonFiniteError as exc:
        raise DivergenceError(f"non-finite value at step {adam.step + 1}: {exc}") from exc
    for name, t in inverter.params.items():
        if t.grad is None:
            t.grad = np.zeros_like(t.values)
        elif not np.all(np.isfinite(t.grad)):
            raise DivergenceError(f"non-finite gradient for {name} at step {adam.step + 1}")
    adam_step(inverter.params, adam)
    return float(loss.values)

