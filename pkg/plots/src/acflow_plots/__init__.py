"""Diagnostic figures from acflow CSV artifacts; never recomputes physics."""

__version__ = "0.1.0"
