"""Consistent CT system matrices for 2D fan-beam and 3D cone-beam geometries."""

__version__ = "0.1.0"
