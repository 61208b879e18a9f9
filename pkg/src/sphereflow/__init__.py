"""Numerical lab for attention and Kuramoto-type dynamics on the unit sphere."""

__version__ = "0.1.0"
