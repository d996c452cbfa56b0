"""Numerical laboratory for one-dimensional nonlocal operators with symmetric kernels."""

__version__ = "0.1.0"
