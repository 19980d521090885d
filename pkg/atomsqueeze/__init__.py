"""Atomsqueeze - conditional atom-number collapse of lattice atoms under cavity photodetection."""

__version__ = "1.0.0"
