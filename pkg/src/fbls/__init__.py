"""Broad Learning System with Takagi-Sugeno fuzzy feature extraction."""
__version__ = "0.1.0"
