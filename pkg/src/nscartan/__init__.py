"""Fourier expansions and Heegner points on Cartan non-split modular curves."""

__version__ = "0.1.0"
