"""Sparse-grid approximation of Korobov functions and its compilation into neural networks."""

__version__ = "0.1.0"
