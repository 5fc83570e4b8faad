"""Differential operators along the left-invariant frame X, Y, T.

Frame derivatives are taken either from a field's analytic derivatives or by
finite differences along group flows: the X-derivative of ``f`` at ``p`` is
``d/ds f(p . (s, 0, 0))`` at ``s = 0``, and likewise for Y and T.  Because the
flow is right multiplication, finite differences inherit left-invariance.

A derivative *word* is a string over ``"XYT"`` read as operator composition,
so ``"XY"`` means ``X(Y f)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import NonFinite, SingularPoint, StepTooCoarse
from .group import Dilation, Point, as_points, dilate, gauge, gauge_dist, inv, mul

# Pluriharmonic functions satisfy Delta_b^2 f + C_T * T^2 f = 0 with the frame
# normalisation Delta_b = XX + YY, [X, Y] = -4T.
C_T = 16.0

_DEGREE = {"X": 1, "Y": 1, "T": 2}
_GENERATOR = {"X": (1.0, 0.0, 0.0), "Y": (0.0, 1.0, 0.0), "T": (0.0, 0.0, 1.0)}


@dataclass(frozen=True)
class Singularity:
    """Point singularity of power type ``rho^-order``; ``order == 0`` means log."""

    point: Point
    order: float = 0.0


class ScalarField:
    """Vectorised real field on the group.

    ``evaluate`` maps an ``(..., 3)`` array to an ``(...)`` array.  ``derivative``
    (optional) maps ``(word, points)`` to the analytic frame derivative.
    """

    def __init__(
        self,
        evaluate: Callable[[np.ndarray], np.ndarray],
        derivative: Optional[Callable[[str, np.ndarray], np.ndarray]] = None,
        singular_set: Sequence[Singularity] = (),
        name: str = "field",
    ):
        self._evaluate = evaluate
        self._derivative = derivative
        self.singular_set = tuple(singular_set)
        self.name = name

    def __call__(self, p):
        v = self._evaluate(as_points(p))
        return float(v) if isinstance(p, Point) else np.asarray(v, dtype=float)

    def __repr__(self):
        return f"ScalarField({self.name})"

    @property
    def has_analytic(self) -> bool:
        return self._derivative is not None

    def analytic(self, word: str, p):
        if self._derivative is None:
            raise ValueError(f"{self.name} has no analytic derivatives")
        if word == "":
            return self(p)
        v = self._derivative(word, as_points(p))
        return float(v) if isinstance(p, Point) else np.asarray(v, dtype=float)

    def translated(self, g) -> "ScalarField":
        """The field ``y -> f(g . y)``."""
        g = as_points(g)
        deriv = None
        if self._derivative is not None:
            deriv = lambda w, q: self._derivative(w, mul(g, q))
        sing = [Singularity(Point.from_array(mul(inv(g), s.point)), s.order) for s in self.singular_set]
        return ScalarField(lambda q: self._evaluate(mul(g, q)), deriv, sing, f"{self.name}∘L")

    def dilated(self, lam: float) -> "ScalarField":
        """The field ``y -> f(delta_lam y)``."""
        d = Dilation(lam)
        deriv = None
        if self._derivative is not None:
            deriv = lambda w, q: lam ** sum(_DEGREE[c] for c in w) * self._derivative(w, dilate(d, q))
        sing = [Singularity(Point.from_array(dilate(Dilation(1 / lam), s.point)), s.order) for s in self.singular_set]
        return ScalarField(lambda q: self._evaluate(dilate(d, q)), deriv, sing, f"{self.name}∘δ")

    def map(self, fn, name=None) -> "ScalarField":
        """Pointwise post-composition (no analytic derivatives survive)."""
        return ScalarField(lambda q: fn(self._evaluate(q)), None, self.singular_set, name or self.name)


def constant_field(c: float) -> ScalarField:
    def deriv(word, q):
        return np.zeros(q.shape[:-1])

    return ScalarField(lambda q: np.full(q.shape[:-1], float(c)), deriv, (), f"const({c})")


@dataclass(frozen=True)
class FDScheme:
    """Finite-difference controls.

    ``step`` is the base step for horizontal flows, scaled by the local scale
    ``min(max(1, gauge(p)), distance to the singular set)``; T-steps carry one
    more factor of that scale.  ``None`` picks 3e-2 for first-order words and
    5e-2 otherwise.  ``order`` is the accuracy order of each central stencil
    and ``richardson`` the number of step-halving extrapolation levels.  Fourth
    derivatives of singular fields involve heavy cancellation between words,
    which is why the default pairs a sixth-order stencil with two levels.
    """

    step: Optional[float] = None
    order: int = 6
    richardson: int = 2
    prefer_analytic: bool = True
    tol: float = 2e-2

    def __post_init__(self):
        if self.step is not None and not self.step > 0:
            raise ValueError("step must be positive")
        if self.order not in (2, 4, 6):
            raise ValueError("order must be 2, 4 or 6")
        if self.richardson < 0:
            raise ValueError("richardson levels must be >= 0")

    def base_step(self, total_order: int) -> float:
        if self.step is not None:
            return self.step
        return 3e-2 if total_order == 1 else 5e-2


DEFAULT_SCHEME = FDScheme()
FD_ONLY = FDScheme(prefer_analytic=False)


@lru_cache(maxsize=None)
def central_weights(deriv: int, accuracy: int) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Offsets (in units of h) and weights of the central stencil."""
    half = (deriv + 1) // 2 - 1 + accuracy // 2
    offs = np.arange(-half, half + 1, dtype=float)
    n = len(offs)
    A = np.vander(offs, n, increasing=True).T
    b = np.zeros(n)
    b[deriv] = math.factorial(deriv)
    w = np.linalg.solve(A, b)
    keep = np.abs(w) > 1e-13 * np.abs(w).max()
    return tuple(offs[keep]), tuple(w[keep])


def _runs(word: str):
    return [(k, len(list(g))) for k, g in itertools.groupby(word)]


def _check_singular(f: ScalarField, nodes: np.ndarray, p: np.ndarray):
    for s in f.singular_set:
        d = gauge_dist(nodes, np.asarray(s.point))
        scale = max(1.0, gauge(s.point))
        if np.any(d <= 1e-12 * scale):
            raise SingularPoint(f"stencil node on singular point {s.point} of {f.name}")


def _fd_word(f: ScalarField, word: str, p: np.ndarray, h: np.ndarray, scale: np.ndarray, accuracy: int) -> np.ndarray:
    """Nested flow stencils, one per run of equal letters, outermost first.

    The step along a letter of homogeneous degree ``d`` is ``h * scale^(d-1)``,
    so T-steps shrink with the local scale the way the t-coordinate does.
    """
    p = as_points(p)
    nodes = p[..., None, :]
    coef = np.ones(p.shape[:-1] + (1,))
    for letter, k in _runs(word):
        offs, w = central_weights(k, accuracy)
        hk = h * scale ** (_DEGREE[letter] - 1)
        gen = np.array(_GENERATOR[letter])
        steps = np.array(offs)[:, None] * gen  # (m, 3)
        steps = steps[None] * hk[..., None, None]  # (..., m, 3)
        nodes = mul(nodes[..., :, None, :], steps[..., None, :, :]).reshape(p.shape[:-1] + (-1, 3))
        coef = (coef[..., :, None] * (np.array(w) / hk[..., None] ** k)[..., None, :]).reshape(p.shape[:-1] + (-1,))
    _check_singular(f, nodes, p)
    vals = f._evaluate(nodes)
    if not np.all(np.isfinite(vals)):
        raise NonFinite(f"non-finite evaluation of {f.name} on stencil")
    return np.sum(coef * vals, axis=-1)


def frame_word(f: ScalarField, word: str, p, scheme: FDScheme = DEFAULT_SCHEME):
    """Derivative ``D_{w1} D_{w2} ... f`` at ``p``."""
    scalar = isinstance(p, Point)
    if scheme.prefer_analytic and f.has_analytic:
        return f.analytic(word, p)
    pts = as_points(p)
    if word == "":
        return f(p)
    k = len(word)
    scale = _local_scale(f, pts)
    if np.any(scale <= 0):
        raise SingularPoint(f"derivative of {f.name} requested on its singular set")
    h0 =scheme.base_step(k) * scale
    acc = scheme.order
    table = [_fd_word(f, word, pts, h0 / 2**j, scale, acc) for j in range(scheme.richardson + 1)]
    coarse = table[0]
    # central-stencil errors expand in even powers of h
    for level in range(scheme.richardson):
        fac = 2.0 ** (acc + 2 * level)
        table = [(fac * table[j + 1] - table[j]) / (fac - 1) for j in range(len(table) - 1)]
    out = table[0]
    if scheme.richardson > 0:
        ref = np.maximum(np.abs(f._evaluate(pts)), 1.0) / scale ** sum(_DEGREE[c] for c in word)
        gap = np.abs(coarse - out)
        if np.any(gap > scheme.tol * np.maximum(np.maximum(np.abs(out), np.abs(coarse)), ref)):
            raise StepTooCoarse(f"Richardson disagreement above {scheme.tol} for {word} {f.name}")
    return float(out) if scalar else out


def _local_scale(f: ScalarField, pts: np.ndarray) -> np.ndarray:
    """``max(1, gauge(p))``, capped by the distance to the nearest singular point."""
    scale = np.maximum(1.0, gauge(pts))
    for s in f.singular_set:
        scale = np.minimum(scale, gauge_dist(pts, np.asarray(s.point)))
    return np.asarray(scale, dtype=float)


def frame_derivative(f: ScalarField, direction: str, p, scheme: FDScheme = DEFAULT_SCHEME):
    if direction not in _GENERATOR:
        raise ValueError(f"direction must be one of X, Y, T, got {direction!r}")
    return frame_word(f, direction, p, scheme)


def horizontal_gradient_sq(f: ScalarField, p, scheme: FDScheme = DEFAULT_SCHEME):
    return frame_word(f, "X", p, scheme) ** 2 + frame_word(f, "Y", p, scheme) ** 2


def sublaplacian(f: ScalarField, p, scheme: FDScheme = DEFAULT_SCHEME):
    return frame_word(f, "XX", p, scheme) + frame_word(f, "YY", p, scheme)


def sublaplacian_sq(f: ScalarField, p, scheme: FDScheme = DEFAULT_SCHEME):
    return sum(frame_word(f, w, p, scheme) for w in ("XXXX", "XXYY", "YYXX", "YYYY"))


def paneitz_prime(f: ScalarField, p, scheme: FDScheme = DEFAULT_SCHEME):
    """``P' f = 2 Delta_b^2 f``."""
    return 2.0 * sublaplacian_sq(f, p, scheme)


def commutator_XY(f: ScalarField, p, scheme: FDScheme = DEFAULT_SCHEME):
    return frame_word(f, "XY", p, scheme) - frame_word(f, "YX", p, scheme)


def pluriharmonic_residual(f: ScalarField, p, scheme: FDScheme = DEFAULT_SCHEME, normalized: bool = False):
    """``Delta_b^2 f + 16 T^2 f``.

    With ``normalized=True`` the residual is divided by
    ``max(|Delta_b^2 f|, 16 |T^2 f|, 1)``, the local magnitude of its two terms.
    """
    quartic = sublaplacian_sq(f, p, scheme)
    tt = C_T * frame_word(f, "TT", p, scheme)
    r = quartic + tt
    if normalized:
        r = r / np.maximum(np.maximum(np.abs(quartic), np.abs(tt)), 1.0)
    return r


def webster_scalar(u: ScalarField, p, scheme: FDScheme = DEFAULT_SCHEME):
    """Webster curvature of ``e^u theta``: ``-(Delta_b u + |grad_b u|^2) e^{-u}``."""
    lap = sublaplacian(u, p, scheme)
    grad = horizontal_gradient_sq(u, p, scheme)
    return -(lap + grad) * np.exp(-u(p))
