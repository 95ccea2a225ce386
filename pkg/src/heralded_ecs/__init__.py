"""Heralded entangled coherent states between remote mechanical resonators."""

__version__ = "0.1.0"
