"""Quantum error mitigation on an exact density-matrix simulator."""

__version__ = "0.1.0"
