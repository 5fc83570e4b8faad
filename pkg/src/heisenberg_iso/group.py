"""Group structure of the first Heisenberg group.

Points are triples ``(x, y, t)``.  Every function here accepts either a
:class:`Point` or an array whose last axis has length 3, and broadcasts over
the leading axes, so the same code serves single points and quadrature clouds.

The group law is

    (x, y, t) . (x', y', t') = (x + x', y + y', t + t' + 2 (x' y - x y'))

which makes ``X = d/dx + 2y d/dt`` and ``Y = d/dy - 2x d/dt`` left-invariant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

HOMOGENEOUS_DIM = 4


@dataclass(frozen=True)
class Point:
    x: float
    y: float
    t: float

    def __post_init__(self):
        if not all(math.isfinite(c) for c in (self.x, self.y, self.t)):
            raise ValueError(f"non-finite coordinates {self!r}")

    def __array__(self, dtype=None, copy=None):
        return np.array([self.x, self.y, self.t], dtype=dtype or float)

    def __iter__(self):
        return iter((self.x, self.y, self.t))

    @classmethod
    def from_array(cls, a) -> "Point":
        a = np.asarray(a, dtype=float)
        return cls(float(a[0]), float(a[1]), float(a[2]))


IDENTITY = Point(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class Dilation:
    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("dilation factor must be positive")

    def __call__(self, p):
        return dilate(self, p)


def as_points(p) -> np.ndarray:
    a = np.asarray(p, dtype=float)
    if a.shape[-1:] != (3,):
        raise ValueError(f"expected trailing axis of length 3, got shape {a.shape}")
    return a


def _wrap(like, arr):
    return Point.from_array(arr) if isinstance(like, Point) else arr


def mul(p, q):
    a, b = as_points(p), as_points(q)
    x = a[..., 0] + b[..., 0]
    y = a[..., 1] + b[..., 1]
    t = a[..., 2] + b[..., 2] + 2.0 * (b[..., 0] * a[..., 1] - a[..., 0] * b[..., 1])
    out = np.stack(np.broadcast_arrays(x, y, t), axis=-1)
    return _wrap(p if isinstance(p, Point) and isinstance(q, Point) else None, out)


def inv(p):
    return _wrap(p, -as_points(p))


def gauge(p):
    """Koranyi gauge ``(|z|^4 + t^2)^(1/4)``."""
    a = as_points(p)
    r2 = a[..., 0] ** 2 + a[..., 1] ** 2
    g = np.sqrt(np.hypot(r2, a[..., 2]))
    return float(g) if isinstance(p, Point) else g


def dilate(d, p):
    lam = d.lam if isinstance(d, Dilation) else float(d)
    if not lam > 0:
        raise ValueError("dilation factor must be positive")
    a = as_points(p)
    out = a * np.array([lam, lam, lam * lam])
    return _wrap(p, out)


def gauge_dist(p, q):
    """Left-invariant quasi-distance ``gauge(q^-1 p)`` (a true metric here)."""
    g = gauge(mul(inv(as_points(q)), as_points(p)))
    return float(g) if isinstance(p, Point) and isinstance(q, Point) else g
