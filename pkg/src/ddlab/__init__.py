"""Desk-scale double-descent laboratory for autoencoders on synthetic latent-linear data."""

__version__ = "0.1.0"
