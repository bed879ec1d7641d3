"""Transformer VQ-VAE for unsupervised acoustic unit discovery and re-synthesis."""
__version__ = "0.1.0"
