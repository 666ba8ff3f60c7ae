"""Coupled circular-beta and Sine-beta Dirac operators driven by one hyperbolic Brownian motion."""

__version__ = "0.1.0"
