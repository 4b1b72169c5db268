"""Simulation and verification toolkit for scalar ergodic diffusions."""

__version__ = "0.1.0"
