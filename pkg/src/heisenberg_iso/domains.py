"""Domains for volume and perimeter quadrature.

Perimeters are horizontal: on gauge spheres the graph-chart measure of
:func:`quadrature.sphere_integral`; on a level set of a defining function
``phi`` (box faces, planes) the density ``sqrt((X phi)^2 + (Y phi)^2) / |grad phi|``
against Euclidean area.  For a plane with unit normal ``n`` that density is
``sqrt((n1 + 2 y n3)^2 + (n2 - 2 x n3)^2)``: 1 on ``x``/``y`` faces and
``2|z|`` on ``t`` faces.

Translated gauge balls are Euclidean-convex (the unit ball is the region
between the concave graphs ``t = +-sqrt(1 - |z|^4)``, and left translation is
affine), so a ray from an interior point leaves a ball exactly once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .calculus import ScalarField
from .group import IDENTITY, Dilation, Point, as_points, dilate, gauge, gauge_dist, inv, mul
from .quadrature import (
    UNIT_BALL_VOLUME,
    QuadratureSpec,
    _map_rule,
    adaptive_cubature,
    annulus_integral,
    ball_integral,
    gauge_polar,
    sphere_integral,
)

_AXES = {"x": (1.0, 0.0, 0.0), "y": (0.0, 1.0, 0.0), "t": (0.0, 0.0, 1.0)}


def _ev(f):
    return f._evaluate if isinstance(f, ScalarField) else f


def _ball_box(center, r):
    c = np.asarray(center, dtype=float)
    dz = 2 * math.hypot(c[0], c[1]) * r
    lo = np.array([c[0] - r, c[1] - r, c[2] - r * r - dz])
    hi = np.array([c[0] + r, c[1] + r, c[2] + r * r + dz])
    return lo, hi


def plane_density(normal, pts):
    """Horizontal perimeter density of the plane with unit ``normal``."""
    n = np.asarray(normal, dtype=float)
    p = as_points(pts)
    return np.hypot(n[0] + 2 * p[..., 1] * n[2], n[1] - 2 * p[..., 0] * n[2])


@dataclass(frozen=True)
class GaugeBall:
    center: Point = IDENTITY
    radius: float = 1.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "center", Point(*self.center))

    def describe(self) -> str:
        c = self.center
        return f"GaugeBall(center=({c.x:g},{c.y:g},{c.t:g}),r={self.radius:g})"

    def contains(self, pts):
        return gauge_dist(as_points(pts), np.asarray(self.center)) <= self.radius

    def bounding_box(self):
        return _ball_box(self.center, self.radius)

    def volume(self) -> float:
        return UNIT_BALL_VOLUME * self.radius**4

    def volume_integral(self, f, quad: Optional[QuadratureSpec] = None) -> float:
        return ball_integral(f, self.center, self.radius, quad)

    def boundary_integral(self, f, quad: Optional[QuadratureSpec] = None) -> float:
        return sphere_integral(f, self.radius, quad, self.center)

    def dilated(self, lam: float) -> "GaugeBall":
        return GaugeBall(dilate(Dilation(lam), self.center), lam * self.radius)

    def doubled(self) -> "GaugeBall":
        return GaugeBall(self.center, 2 * self.radius)


@dataclass(frozen=True)
class GaugeAnnulus:
    r0: float
    r1: float
    center: Point = IDENTITY

    def __post_init__(self):
        if not (0 < self.r0 <= self.r1):
            raise ValueError("annulus needs 0 < r0 <= r1")
        object.__setattr__(self, "center", Point(*self.center))

    def describe(self) -> str:
        return f"GaugeAnnulus(r0={self.r0:g},r1={self.r1:g})"

    def contains(self, pts):
        d = gauge_dist(as_points(pts), np.asarray(self.center))
        return (d >= self.r0) & (d <= self.r1)

    def bounding_box(self):
        return _ball_box(self.center, self.r1)

    def volume(self) -> float:
        return UNIT_BALL_VOLUME * (self.r1**4 - self.r0**4)

    def volume_integral(self, f, quad: Optional[QuadratureSpec] = None) -> float:
        return annulus_integral(f, self.r0, self.r1, quad, self.center)

    def boundary_integral(self, f, quad: Optional[QuadratureSpec] = None) -> float:
        if self.r0 == self.r1:
            return 0.0
        return sphere_integral(f, self.r1, quad, self.center) + sphere_integral(f, self.r0, quad, self.center)

    def dilated(self, lam: float) -> "GaugeAnnulus":
        return GaugeAnnulus(lam * self.r0, lam * self.r1, dilate(Dilation(lam), self.center))


@dataclass(frozen=True)
class Box:
    corner: Point
    extents: tuple

    def __post_init__(self):
        ext = tuple(float(e) for e in self.extents)
        if len(ext) != 3 or not all(e > 0 for e in ext):
            raise ValueError("box extents must be three positive numbers")
        object.__setattr__(self, "corner", Point(*self.corner))
        object.__setattr__(self, "extents", ext)

    def describe(self) -> str:
        c = self.corner
        return f"Box(corner=({c.x:g},{c.y:g},{c.t:g}),extents=({','.join(f'{e:g}' for e in self.extents)}))"

    @property
    def lo(self):
        return np.asarray(self.corner, dtype=float)

    @property
    def hi(self):
        return self.lo + np.asarray(self.extents)

    def contains(self, pts):
        p = as_points(pts)
        return np.all((p >= self.lo) & (p <= self.hi), axis=-1)

    def bounding_box(self):
        return self.lo, self.hi

    def volume(self) -> float:
        return float(np.prod(self.extents))

    def _check(self, f):
        for s in getattr(f, "singular_set", ()):
            if self.contains(np.asarray(s.point)):
                raise ValueError("singular point inside a box is not supported")

    def volume_integral(self, f, quad: Optional[QuadratureSpec] = None) -> float:
        quad = quad or QuadratureSpec()
        self._check(f)
        r = adaptive_cubature(_ev(f), self.lo, self.hi, quad.rel_tol, quad.abs_tol, quad.node_budget)
        return r.value

    def boundary_integral(self, f, quad: Optional[QuadratureSpec] = None) -> float:
        """Sum over the six faces with the horizontal density."""
        quad = quad or QuadratureSpec()
        self._check(f)
        ev = _ev(f)
        lo, hi = self.lo, self.hi
        total = 0.0
        for axis in range(3):
            free = [i for i in range(3) if i != axis]
            normal = np.zeros(3)
            normal[axis] = 1.0
            for level in (lo[axis], hi[axis]):

                def face(u, axis=axis, free=free, level=level, normal=normal):
                    p = np.empty((len(u), 3))
                    p[:, axis] = level
                    p[:, free[0]] = u[:, 0]
                    p[:, free[1]] = u[:, 1]
                    return ev(p) * plane_density(normal, p)

                r = adaptive_cubature(face, lo[free], hi[free], quad.rel_tol, quad.abs_tol, quad.node_budget)
                total += r.value
        return total

    def dilated(self, lam: float) -> "Box":
        """Image under ``delta_lam`` (diagonal, so boxes map to boxes)."""
        e = self.extents
        return Box(dilate(Dilation(lam), self.corner), (lam * e[0], lam * e[1], lam * lam * e[2]))


@dataclass(frozen=True)
class HalfSpaceClip:
    """``{p : n . p > offset}`` intersected with a bounding gauge ball."""

    normal: Union[str, tuple]
    offset: float
    bound: GaugeBall

    def __post_init__(self):
        n = np.asarray(_AXES[self.normal] if isinstance(self.normal, str) else self.normal, dtype=float)
        if n.shape != (3,) or not np.linalg.norm(n) > 0:
            raise ValueError("normal must be an axis name or a nonzero 3-vector")
        object.__setattr__(self, "_n", n / np.linalg.norm(n))

    def describe(self) -> str:
        nm = self.normal if isinstance(self.normal, str) else "(" + ",".join(f"{v:g}" for v in self._n) + ")"
        return f"HalfSpaceClip(normal={nm},offset={self.offset:g},bound={self.bound.describe()})"

    @property
    def unit_normal(self):
        return self._n

    def side(self, pts):
        return as_points(pts) @ self._n - self.offset

    def contains(self, pts):
        return (self.side(pts) > 0) & self.bound.contains(pts)

    def bounding_box(self):
        return self.bound.bounding_box()

    def complement(self) -> "HalfSpaceClip":
        return HalfSpaceClip(tuple(-self._n), -self.offset, self.bound)

    def clipped_ball_integral(self, f, ball: GaugeBall, quad: Optional[QuadratureSpec] = None) -> float:
        """``int_{ball, n.p > offset} f dv`` by exact ray clipping in the ball chart.

        With ``p = c . delta_s(omega)`` the side function is quadratic in ``s``,
        so each ray meets the half-space in at most two intervals; a Gauss rule
        runs along each interval and the angles are integrated adaptively.
        """
        quad = quad or QuadratureSpec()
        ev = _ev(f)
        c = np.asarray(ball.center, dtype=float)
        R = ball.radius
        n = self._n
        # n . (c . y) = n . c + a y_x + b y_y + n3 y_t
        a = n[0] + 2 * n[2] * c[1]
        b = n[1] - 2 * n[2] * c[0]
        d0 = float(n @ c) - self.offset
        m = max(6, quad.resolution)

        def integrand(u):
            phi = (np.pi / 2) * np.sin(np.pi * u[:, 0] / 2)
            dphi = (np.pi**2 / 4) * np.cos(np.pi * u[:, 0] / 2)
            sc = np.sqrt(np.clip(np.cos(phi), 0.0, None))
            om = np.stack([sc * np.cos(u[:, 1]), sc * np.sin(u[:, 1]), np.sin(phi)], -1)
            A = n[2] * om[:, 2]
            B = a * om[:, 0] + b * om[:, 1]
            # roots of A s^2 + B s + d0 in (0, R)
            with np.errstate(divide="ignore", invalid="ignore"):
                disc = np.sqrt(np.clip(B * B - 4 * A * d0, 0.0, None))
                r1 = np.where(np.abs(A) > 1e-14, (-B - disc) / (2 * A), -d0 / B)
                r2 = np.where(np.abs(A) > 1e-14, (-B + disc) / (2 * A), np.nan)
            roots = np.stack([r1, r2], -1)
            roots = np.where(np.isfinite(roots) & (roots > 0) & (roots < R), roots, R)
            bps = np.sort(np.concatenate([np.zeros((len(u), 1)), roots, np.full((len(u), 1), R)], 1), 1)
            lo, hi = bps[:, :-1], bps[:, 1:]
            mid = (lo + hi) / 2
            keep = (A[:, None] * mid + B[:, None]) * mid + d0 > 0
            sn, ws = _map_rule(lo, hi, m)  # (k, 3, m)
            y = np.stack([sn * om[:, None, None, 0], sn * om[:, None, None, 1], sn * sn * om[:, None, None, 2]], -1)
            pts = mul(c, y)
            vals = ev(pts.reshape(-1, 3)).reshape(sn.shape)
            inner = np.sum(vals * sn**3 * ws, axis=-1) * keep
            return inner.sum(axis=1) * dphi

        r = adaptive_cubature(
            integrand, [-1.0, 0.0], [1.0, 2 * np.pi], quad.rel_tol, quad.abs_tol, quad.node_budget, splits=[4, 8]
        )
        return r.value

    def volume_integral(self, f, quad: Optional[QuadratureSpec] = None) -> float:
        return self.clipped_ball_integral(f, self.bound, quad)

    def volume(self, quad: Optional[QuadratureSpec] = None) -> float:
        return self.volume_integral(lambda p: np.ones(p.shape[:-1]), quad)

    def plane_integral(self, f, within: GaugeBall, quad: Optional[QuadratureSpec] = None) -> float:
        """``int f dsigma_h`` over the plane piece inside ``within``."""
        quad = quad or QuadratureSpec()
        ev = _ev(f)
        n = self._n
        c = np.asarray(within.center, dtype=float)
        R = within.radius
        p0 = self._interior_point(within)
        if p0 is None:
            return 0.0
        e1 = np.cross(n, [1.0, 0.0, 0.0] if abs(n[0]) < 0.9 else [0.0, 1.0, 0.0])
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(n, e1)

        def exit_distance(psi):
            e = np.cos(psi)[:, None] * e1 + np.sin(psi)[:, None] * e2
            inside = lambda tau: gauge_dist(p0 + tau[:, None] * e, c) <= R
            lo = np.zeros(len(psi))
            hi = np.full(len(psi), R)
            while True:
                out = ~inside(hi)
                if out.all():
                    break
                hi = np.where(out, hi, 2 * hi)
            for _ in range(60):
                mid = (lo + hi) / 2
                ins = inside(mid)
                lo = np.where(ins, mid, lo)
                hi = np.where(ins, hi, mid)
            return (lo + hi) / 2, e

        def integrand(u):
            tmax, e = exit_distance(u[:, 1])
            tau = u[:, 0] * tmax
            p = p0 + tau[:, None] * e
            return ev(p) * plane_density(n, p) * u[:, 0] * tmax**2

        r = adaptive_cubature(
            integrand, [0.0, 0.0], [1.0, 2 * np.pi], quad.rel_tol, quad.abs_tol, quad.node_budget, splits=[1, 8]
        )
        return r.value

    def _interior_point(self, ball: GaugeBall):
        """A point of the plane strictly inside ``ball``, or ``None``."""
        c = np.asarray(ball.center, dtype=float)
        n = self._n
        p0 = c - (float(n @ c) - self.offset) * n
        if gauge_dist(p0, c) < ball.radius:
            return p0
        lo, hi = ball.bounding_box()
        g = np.linspace(0, 1, 41)
        grid = lo + (hi - lo) * np.stack(np.meshgrid(g, g, g, indexing="ij"), -1).reshape(-1, 3)
        proj = grid - (grid @ n - self.offset)[:, None] * n
        d = gauge_dist(proj, c)
        k = int(np.argmin(d))
        return proj[k] if d[k] < ball.radius else None

    def boundary_integral(self, f, quad: Optional[QuadratureSpec] = None) -> float:
        """Plane piece inside the bound plus the spherical cap on the kept side."""
        quad = quad or QuadratureSpec()
        ev = _ev(f)
        cap = lambda p: ev(p) * (self.side(p) > 0)
        return self.plane_integral(f, self.bound, quad) + sphere_integral(cap, self.bound.radius, quad, self.bound.center)

    def dilated(self, lam: float) -> "HalfSpaceClip":
        """Image under ``delta_lam``; dilations are linear, so planes map to planes."""
        n = self._n * np.array([1.0 / lam, 1.0 / lam, 1.0 / lam**2])
        k = np.linalg.norm(n)
        return HalfSpaceClip(tuple(n / k), self.offset / k, self.bound.dilated(lam))


Domain = Union[GaugeBall, GaugeAnnulus, Box, HalfSpaceClip]
