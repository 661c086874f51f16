"""Numerical laboratory for dispersive estimates of Schrodinger Hamiltonians."""

__version__ = "0.1.0"
