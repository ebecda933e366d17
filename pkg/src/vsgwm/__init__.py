"""Sparse-gated latent world models, their behaviour learner, and the BringBackShapes arena."""
__version__ = "0.1.0"
