"""A1 weights on the Heisenberg group: constructors, maximal functions and
sampled A1 constants.

The supremum over radii in the maximal function is taken over a log-uniform
:class:`RadiusGrid`.  By default the grid is relative: at a point ``p`` the
radii are multiplied by ``gauge(p)``, which makes the estimator exactly
dilation-invariant for gauge-homogeneous weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .calculus import ScalarField, Singularity
from .fields import Kind, make_closed_form
from .group import IDENTITY, Point, as_points, gauge, mul
from .quadrature import (
    UNIT_BALL_VOLUME,
    QuadratureSpec,
    ball_integral,
    gauge_polar,
    power_ball_integral,
)


@dataclass
class Weight:
    """Positive density.  ``kappa`` is set for ``rho^-kappa`` (gauge-homogeneous)."""

    field: ScalarField
    kappa: Optional[float] = None
    name: str = "weight"

    @property
    def singular_set(self):
        return self.field.singular_set

    def __call__(self, p):
        return self.field(p)

    def ball_integral(self, center, radius: float, quad: Optional[QuadratureSpec] = None) -> float:
        quad = quad or QuadratureSpec()
        if self.kappa is not None:
            if self.kappa == 0:
                return UNIT_BALL_VOLUME * radius**4
            return power_ball_integral(self.kappa, center, radius, quad)
        return ball_integral(self.field, Point(*center), radius, quad)

    def ball_average(self, center, radius: float, quad: Optional[QuadratureSpec] = None) -> float:
        return self.ball_integral(center, radius, quad) / (UNIT_BALL_VOLUME * radius**4)

    def power(self, exponent: float) -> ScalarField:
        """``w^exponent`` as a field (perimeters use ``w^(3/4)``)."""
        if self.kappa is not None:
            return make_closed_form(Kind.PowerGauge, kappa=self.kappa * exponent)
        f = self.field
        return ScalarField(lambda q: f._evaluate(q) ** exponent, None, f.singular_set, f"({self.name})^{exponent}")

    def translated(self, g) -> "Weight":
        """``x -> w(g . x)``; no longer centred, so the power shortcut is dropped."""
        return Weight(self.field.translated(g), None, f"{self.name}∘L")


def power_weight(kappa: float) -> Weight:
    """``rho^-kappa``; ``kappa >= 4`` is allowed for divergence tests."""
    return Weight(make_closed_form(Kind.PowerGauge, kappa=kappa), float(kappa), f"rho^-{kappa:g}")


def conformal_weight(u: ScalarField) -> Weight:
    """``exp(4 u)``.  For ``u = k log(1/rho)`` this is ``rho^-4k``."""
    if getattr(u, "kind", None) is Kind.PowerGaugeLog:
        return power_weight(4.0 * u.params.get("kappa", 1.0))
    if getattr(u, "kind", None) is Kind.LogGauge:
        return power_weight(-4.0)
    sing = [Singularity(s.point, 0.0) for s in u.singular_set]
    ev = u._evaluate
    return Weight(ScalarField(lambda q: np.exp(4.0 * ev(q)), None, sing, f"exp(4 {u.name})"), None, f"exp(4 {u.name})")


@dataclass(frozen=True)
class RadiusGrid:
    r_min: float = 1e-3
    r_max: float = 1e3
    count: int = 25
    relative: bool = True  # radii scale with gauge(p)

    def __post_init__(self):
        if not (0 < self.r_min < self.r_max):
            raise ValueError("need 0 < r_min < r_max")
        if self.count < 8:
            raise ValueError("radius grid needs at least 8 radii")

    def radii(self, p=None) -> np.ndarray:
        r = np.geomspace(self.r_min, self.r_max, self.count)
        if self.relative and p is not None:
            g = gauge(np.asarray(p, dtype=float))
            if g > 0:
                r = r * g
        return r

    def refined(self) -> "RadiusGrid":
        """Insert midpoints (in log scale); the old radii are kept."""
        return replace(self, count=2 * self.count - 1)


@dataclass
class MaximalValue:
    value: float
    radius: float
    averages: np.ndarray = field(repr=False, default=None)


def maximal_function(w: Weight, p, grid: RadiusGrid = RadiusGrid(), quad: Optional[QuadratureSpec] = None) -> MaximalValue:
    """Max over the grid of ball averages of ``w`` centred at ``p``."""
    quad = quad or QuadratureSpec()
    p = as_points(p)
    for s in w.singular_set:
        if np.allclose(np.asarray(s.point), p, atol=0.0, rtol=0.0):
            raise ValueError("maximal function requested at a singular point of the weight")
    radii = grid.radii(p)
    avgs = np.array([w.ball_average(p, r, quad) for r in radii])
    k = int(np.argmax(avgs))
    return MaximalValue(float(avgs[k]), float(radii[k]), avgs)


def sample_cloud(n: int, seed: int = 0, gauge_range=(0.5, 2.0)) -> np.ndarray:
    """``n`` points with gauge log-uniform in ``gauge_range`` and uniform angles.

    Drawing ``2n`` points with the same seed extends the first ``n`` (nested).
    """
    rng = np.random.default_rng(seed)
    u = rng.random((n, 3))
    lo, hi = gauge_range
    s = lo * (hi / lo) ** u[:, 0]
    pts, _ = gauge_polar(s, 2 * u[:, 1] - 1, 2 * np.pi * u[:, 2])
    return pts


@dataclass
class A1Estimate:
    estimate: float
    argmax_point: Point
    radius: float
    ratios: np.ndarray = field(repr=False, default=None)


def _ball_inf(w: Weight, p, r, n: int = 6) -> float:
    """Sampled infimum of ``w`` over ``B(p, r)`` (chart grid including the sphere)."""
    s = r * np.linspace(0.0, 1.0, n + 1)[1:]
    sig = np.linspace(-1.0, 1.0, 2 * n + 1)
    th = np.linspace(0.0, 2 * np.pi, 4 * n, endpoint=False)
    S, SG, TH = np.meshgrid(s, sig, th, indexing="ij")
    y, _ = gauge_polar(S.ravel(), SG.ravel(), TH.ravel())
    pts = mul(as_points(p), y)
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = w(pts)
    vals = vals[np.isfinite(vals)]
    return float(min(vals.min(), w(as_points(p)))) if vals.size else float(w(as_points(p)))


def a1_constant(
    w: Weight,
    samples,
    grid: RadiusGrid = RadiusGrid(),
    quad: Optional[QuadratureSpec] = None,
    mode: str = "center",
) -> A1Estimate:
    """Lower bound for the A1 constant: ``max_x M(w)(x) / w(x)`` over samples.

    ``mode="inf"`` divides each ball average by a sampled infimum of ``w`` over
    the ball instead of the centre value (a cross-check; still a lower bound
    for the true constant up to sampling of the infimum).
    """
    quad = quad or QuadratureSpec()
    pts = as_points(samples).reshape(-1, 3)
    best, best_i, best_r = -math.inf, 0, math.nan
    ratios = np.empty(len(pts))
    for i, p in enumerate(pts):
        if mode == "center":
            m = maximal_function(w, p, grid, quad)
            ratios[i] = m.value / float(w(p))
            r = m.radius
        elif mode == "inf":
            radii = grid.radii(p)
            vals = [w.ball_average(p, rr, quad) / _ball_inf(w, p, rr) for rr in radii]
            k = int(np.argmax(vals))
            ratios[i], r = vals[k], radii[k]
        else:
            raise ValueError("mode must be 'center' or 'inf'")
        if ratios[i] > best:
            best, best_i, best_r = ratios[i], i, r
    return A1Estimate(float(best), Point.from_array(pts[best_i]), float(best_r), ratios)
