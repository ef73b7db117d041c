"""Numerical laboratory for linear response of SRB states of hyperbolic flows."""

__version__ = "0.1.0"
