"""Numerical toolkit for CR geometry of the first Heisenberg group."""

from .group import HOMOGENEOUS_DIM, IDENTITY, Dilation, Point, dilate, gauge, gauge_dist, inv, mul

__all__ = ["HOMOGENEOUS_DIM", "IDENTITY", "Dilation", "Point", "dilate", "gauge", "gauge_dist", "inv", "mul"]
__version__ = "0.1.0"
