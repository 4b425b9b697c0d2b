"""Numerical laboratory for conformally variational scalar invariants."""

__version__ = "0.1.0"
