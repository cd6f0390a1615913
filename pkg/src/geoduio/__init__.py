"""Geometric design and simulation of distributed unknown-input observers."""

__version__ = "0.1.0"
