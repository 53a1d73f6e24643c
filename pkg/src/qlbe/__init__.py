"""Quantum Brownian motion from collisions with an ideal gas."""

__version__ = "0.1.0"
