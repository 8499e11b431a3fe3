"""Geometry of embedded manifolds and the steady Euler flows built from them."""

__version__ = "0.1.0"
