"""Symmetric classifier heads, softmax-extremum analysis and desk-scale training."""

__version__ = "0.1.0"
