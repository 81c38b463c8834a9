"""Doubly robust estimation of dynamic marginal policy effects."""

__version__ = "0.1.0"
