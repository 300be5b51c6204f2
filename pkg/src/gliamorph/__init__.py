"""Volumetric microglia morphometry: threshold, label, split, skeletonize, measure, compare."""

__version__ = "0.1.0"
