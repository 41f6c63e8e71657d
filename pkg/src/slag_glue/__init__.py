"""Numerical special-Lagrangian gluing on a degenerating neck."""

__version__ = "0.1.0"
