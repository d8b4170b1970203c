"""Switched Entropy - topological entropy of switched linear systems."""

__version__ = "0.1.0"
