"""Simulated pulled-rectangle dynamics and a residual network that predicts them."""

__version__ = "0.1.0"
