"""Analysis and simulation of delayed Richardson arms-race models."""

__version__ = "0.1.0"
