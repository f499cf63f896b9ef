"""Sublinear expectations, capacities and laws of large numbers, checked numerically."""

__version__ = "0.1.0"
