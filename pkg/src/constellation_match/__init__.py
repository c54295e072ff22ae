"""Uncertainty-aware object-graph matching for open-set place recognition."""

__version__ = "0.1.0"
