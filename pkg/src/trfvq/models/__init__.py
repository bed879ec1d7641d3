"""Transformer VQ-VAE, codebook inverter, and their training steps."""
from .config import SUPPORTED_K, InverterConfig, VqVaeConfig
from .inverter import CodebookInverter, inverter_loss, synthesize
from .training import (
    Batch,
    DivergenceError,
    LossComponents,
    forward_vqvae,
    train_step_inverter,
    train_step_vqvae,
    vqvae_loss,
)
from .vqvae import SpeakerTable, TransformerVQVAE, UtteranceTooShort

__all__ = [
    "SUPPORTED_K", "Batch", "CodebookInverter", "DivergenceError", "InverterConfig",
    "LossComponents", "SpeakerTable", "TransformerVQVAE", "UtteranceTooShort", "VqVaeConfig",
    "forward_vqvae", "inverter_loss", "synthesize", "train_step_inverter",
    "train_step_vqvae", "vqvae_loss",
]
