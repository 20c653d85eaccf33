"""Hyperbolic attention network segmentation toolkit (CPU, float64)."""

__version__ = "0.1.0"
