"""Stochastic resonance in a single-electron turnstile: simulation and theory."""

__version__ = "0.1.0"
