"""Garment retexturing with geodesic thin-plate splines."""

__version__ = "0.1.0"
