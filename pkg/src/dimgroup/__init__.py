"""Exact computations for simple dimension groups with two extremal states."""

__version__ = "0.1.0"
