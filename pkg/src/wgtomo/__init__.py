"""Numerical laboratory for potential recovery in periodic quantum waveguides."""

__version__ = "0.1.0"
