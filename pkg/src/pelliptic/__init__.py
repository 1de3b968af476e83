"""Numerical laboratory for p-elliptic complex-coefficient operators."""

__version__ = "0.1.0"
