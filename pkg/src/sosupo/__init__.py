"""Unstable periodic orbits that maximise time averages, via SOS auxiliary functions."""

__version__ = "0.1.0"
