"""Finite-population mean-field control with controllable pairwise interactions."""

__version__ = "0.1.0"
