"""Cavity-method toolkit for random factor graphs."""

__version__ = "0.1.0"
