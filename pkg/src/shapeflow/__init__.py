"""Embedding-conditioned generation of quadruped and tree shapes with a
conditional coupling flow."""
__version__ = "0.1.0"
