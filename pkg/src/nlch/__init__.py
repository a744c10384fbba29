"""Yosida-regularized fixed-point solver for a nonlocal Cahn-Hilliard type system."""

__version__ = "0.1.0"
