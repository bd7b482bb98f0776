"""Gradient descent over a noisy fading multiple-access channel."""

__version__ = "0.1.0"
