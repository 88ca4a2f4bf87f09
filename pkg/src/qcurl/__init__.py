"""Curriculum learning for variational quantum circuits, on a dense statevector simulator."""

__version__ = "0.1.0"
