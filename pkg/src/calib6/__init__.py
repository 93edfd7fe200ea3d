"""Numerical certification toolkit for special Lagrangian calibrations on R^6."""

__version__ = "0.1.0"
