"""Kernel discriminators, loss/f-divergence pairs and Fenchel-dual generative training."""

__version__ = "0.1.0"
