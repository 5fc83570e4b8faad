"""Closed-form scalar fields, bump densities and log-kernel potentials.

Closed-form fields are built from sympy expressions; analytic frame
derivatives of any order come from applying ``X = d_x + 2y d_t``,
``Y = d_y - 2x d_t`` and ``T = d_t`` symbolically and lambdifying.  The
hand-written formulas below (``sublap_log_gauge`` and ``szego_numerator``)
are kept separate so the derivative ladder can be checked against them.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
import sympy as sp

from .calculus import ScalarField, Singularity
from .errors import UnknownKind
from .group import IDENTITY, Point, as_points, gauge, inv, mul

_x, _y, _t = sp.symbols("x y t", real=True)


def _apply(letter, e):
    if letter == "X":
        return sp.diff(e, _x) + 2 * _y * sp.diff(e, _t)
    if letter == "Y":
        return sp.diff(e, _y) - 2 * _x * sp.diff(e, _t)
    if letter == "T":
        return sp.diff(e, _t)
    raise ValueError(f"unknown frame direction {letter!r}")


def symbolic_word(expr, word: str):
    """Apply a frame word (outermost letter first) to a sympy expression."""
    for letter in reversed(word):
        expr = _apply(letter, expr)
    return expr


class SymbolicField(ScalarField):
    """ScalarField backed by a sympy expression in ``x, y, t``."""

    def __init__(self, expr, singular_set: Sequence[Singularity] = (), name: Optional[str] = None):
        self.expr = sp.sympify(expr)
        self._cache = {}
        self.kind = None
        self.params = {}
        super().__init__(self._eval, self._deriv, singular_set, name or str(self.expr))

    def _compiled(self, word):
        fn = self._cache.get(word)
        if fn is None:
            e = sp.simplify(symbolic_word(self.expr, word)) if word else self.expr
            fn = sp.lambdify((_x, _y, _t), e, "numpy")
            self._cache[word] = fn
        return fn

    def _run(self, word, q):
        q = as_points(q)
        with np.errstate(divide="ignore", invalid="ignore"):
            v = self._compiled(word)(q[..., 0], q[..., 1], q[..., 2])
        return np.broadcast_to(np.asarray(v, dtype=float), q.shape[:-1]).copy()

    def _eval(self, q):
        return self._run("", q)

    def _deriv(self, word, q):
        return self._run(word, q)

    def word_expr(self, word: str):
        return sp.simplify(symbolic_word(self.expr, word))


class Kind(enum.Enum):
    LogGauge = "LogGauge"
    SublapLogGauge = "SublapLogGauge"
    SzegoNumerator = "SzegoNumerator"
    PowerGaugeLog = "PowerGaugeLog"
    CoordinateMonomial = "CoordinateMonomial"
    LinearT = "LinearT"
    PowerGauge = "PowerGauge"
    ExpLinearT = "ExpLinearT"


_R2 = _x**2 + _y**2
_RHO4 = _R2**2 + _t**2


def make_closed_form(kind, **params) -> SymbolicField:
    """Build a closed-form field.

    ``PowerGaugeLog`` takes ``kappa`` and is ``kappa * log(1/rho)``;
    ``CoordinateMonomial`` takes exponents ``a, b, c`` and ``coef``;
    ``LinearT`` and ``ExpLinearT`` take ``c2``; ``PowerGauge`` is ``rho^-kappa``.
    """
    f = _closed_form(kind, **params)
    f.kind = Kind(kind) if not isinstance(kind, Kind) else kind
    f.params = dict(params)
    return f


def _closed_form(kind, **params) -> SymbolicField:
    try:
        kind = Kind(kind) if not isinstance(kind, Kind) else kind
    except ValueError:
        raise UnknownKind(f"unknown closed-form kind {kind!r}") from None
    origin = Singularity(IDENTITY, 0.0)
    if kind is Kind.LogGauge:
        return SymbolicField(sp.log(_RHO4) / 4, [origin], "log rho")
    if kind is Kind.SublapLogGauge:
        return SymbolicField(2 * _R2 / _RHO4, [Singularity(IDENTITY, 2.0)], "2|z|^2/rho^4")
    if kind is Kind.SzegoNumerator:
        return SymbolicField((_t**2 - _R2**2) / _RHO4**2, [Singularity(IDENTITY, 4.0)], "(t^2-|z|^4)/rho^8")
    if kind is Kind.PowerGaugeLog:
        k = params.get("kappa", 1.0)
        return SymbolicField(-sp.nsimplify(k) * sp.log(_RHO4) / 4, [origin], f"{k} log(1/rho)")
    if kind is Kind.PowerGauge:
        k = params.get("kappa", 1.0)
        expr = _RHO4 ** (-sp.nsimplify(k) / 4)
        sing = [Singularity(IDENTITY, float(k))] if k > 0 else []
        return SymbolicField(expr, sing, f"rho^-{k}")
    if kind is Kind.CoordinateMonomial:
        a, b, c = (int(params.get(n, 0)) for n in "abc")
        coef = params.get("coef", 1.0)
        return SymbolicField(sp.nsimplify(coef) * _x**a * _y**b * _t**c, (), f"{coef} x^{a} y^{b} t^{c}")
    if kind is Kind.LinearT:
        c2 = params.get("c2", 1.0)
        return SymbolicField(sp.nsimplify(c2) * _t, (), f"{c2} t")
    if kind is Kind.ExpLinearT:
        c2 = params.get("c2", 1.0)
        return SymbolicField(sp.exp(sp.nsimplify(c2) * _t), (), f"exp({c2} t)")
    raise UnknownKind(kind)  # pragma: no cover


def polynomial_field(expr_or_str) -> SymbolicField:
    return SymbolicField(sp.sympify(expr_or_str, locals={"x": _x, "y": _y, "t": _t}))


def log_gauge() -> SymbolicField:
    return make_closed_form(Kind.LogGauge)


# Hand-written formulas for the derivative ladder, kept free of sympy.


def sublap_log_gauge(p):
    """``2|z|^2 / (|z|^4 + t^2)``."""
    a = as_points(p)
    r2 = a[..., 0] ** 2 + a[..., 1] ** 2
    return 2 * r2 / (r2**2 + a[..., 2] ** 2)


def szego_numerator(p):
    """``(t^2 - |z|^4) / (|z|^4 + t^2)^2``."""
    a = as_points(p)
    r4 = (a[..., 0] ** 2 + a[..., 1] ** 2) ** 2
    t2 = a[..., 2] ** 2
    return (t2 - r4) / (r4 + t2) ** 2


def grad_log_gauge(p):
    """``(X log rho, Y log rho) = ((|z|^2 x + t y), (|z|^2 y - t x)) / rho^4``."""
    a = as_points(p)
    x, y, t = a[..., 0], a[..., 1], a[..., 2]
    r2 = x * x + y * y
    rho4 = r2 * r2 + t * t
    return (r2 * x + t * y) / rho4, (r2 * y - t * x) / rho4


# --- bumps and potentials ---------------------------------------------------

# integral of (1 - (rho/eps)^4)^4 over the gauge ball of radius eps
def bump_profile_mass(eps: float) -> float:
    return np.pi**2 * eps**4 / 10.0


@dataclass
class BumpDensity:
    """Smooth bump ``A (1 - (rho_c/eps)^4)^4`` supported in ``B(center, eps)``.

    ``rho_c`` is the gauge of ``center^-1 . y``; ``rho_c^4`` is a polynomial, so
    the bump is smooth inside its support and C^3 across the boundary.
    """

    center: Point
    epsilon: float
    mass: float = 1.0
    amplitude: float = field(init=False)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        self.center = Point(*self.center)
        self.amplitude = self.mass / _calibrated_profile_mass(float(self.epsilon))

    def __call__(self, p):
        a = as_points(p)
        rel = mul(inv(np.asarray(self.center)), a)
        r2 = rel[..., 0] ** 2 + rel[..., 1] ** 2
        u = (r2 * r2 + rel[..., 2] ** 2) / self.epsilon**4
        v = np.where(u < 1.0, self.amplitude * np.clip(1.0 - u, 0.0, None) ** 4, 0.0)
        return float(v) if isinstance(p, Point) else v

    def as_field(self) -> ScalarField:
        return ScalarField(lambda q: self(q), None, (), f"bump(eps={self.epsilon})")


@lru_cache(maxsize=64)
def _calibrated_profile_mass(eps: float) -> float:
    from .quadrature import QuadratureSpec, ball_integral

    prof = ScalarField(
        lambda q: np.clip(1.0 - ((q[..., 0] ** 2 + q[..., 1] ** 2) ** 2 + q[..., 2] ** 2) / eps**4, 0.0, None) ** 4
    )
    return ball_integral(prof, IDENTITY, eps, QuadratureSpec(resolution=12))


def make_bump(center, epsilon: float, mass: float = 1.0) -> BumpDensity:
    return BumpDensity(Point(*center), float(epsilon), float(mass))


class LogPotential(ScalarField):
    """``v(x) = sum_k int K(x, y) g_k(y) dv(y)`` for a finite sum of bumps.

    ``kernel="plain"`` uses ``K = log(1/rho(y^-1 x))``; ``kernel="ratio"`` uses
    ``K = log(rho(y)/rho(y^-1 x))``, which differs from the plain kernel by the
    additive constant ``int log rho(y) g(y) dv(y)``.
    """

    def __init__(self, densities, quad=None, kernel: str = "plain"):
        from .quadrature import QuadratureSpec

        if isinstance(densities, BumpDensity):
            densities = [densities]
        self.densities = list(densities)
        if kernel not in ("plain", "ratio"):
            raise ValueError("kernel must be 'plain' or 'ratio'")
        self.kernel = kernel
        self.quad = quad or QuadratureSpec()
        self._offset = None
        super().__init__(self._eval, self._deriv, (), f"logpot({kernel})")

    def ratio_offset(self) -> float:
        """``sum_k int log rho(y) g_k(y) dv(y)``."""
        if self._offset is None:
            from .quadrature import log_kernel_quad

            # log rho(y) = -log(1/rho(0^-1 y)): reuse the kernel rule at x = 0
            self._offset = -sum(log_kernel_quad(g, IDENTITY, self.quad) for g in self.densities)
        return self._offset

    def _eval(self, q):
        from .quadrature import log_kernel_quad_many

        q = as_points(q)
        flat = q.reshape(-1, 3)
        out = np.zeros(len(flat))
        for g in self.densities:
            out += log_kernel_quad_many(g, flat, self.quad)
        if self.kernel == "ratio":
            out += self.ratio_offset()
        return out.reshape(q.shape[:-1])

    def _deriv(self, word, q):
        """Kernel derivatives away from the supports; finite differences near them."""
        from .calculus import FD_ONLY, frame_word
        from .quadrature import log_kernel_word_far

        q = as_points(q)
        flat = q.reshape(-1, 3)
        far = np.ones(len(flat), dtype=bool)
        for g in self.densities:
            far &= gauge(mul(inv(np.asarray(g.center)), flat)) > _FAR * g.epsilon
        out = np.zeros(len(flat))
        if far.any():
            for g in self.densities:
                out[far] += log_kernel_word_far(g, flat[far], word, self.quad, _FAR)
        if (~far).any():
            # steps must resolve the bump, whose width is the smallest epsilon
            eps = min(g.epsilon for g in self.densities)
            scheme = replace(FD_ONLY, step=FD_ONLY.base_step(len(word)) * min(eps, 1.0))
            plain = ScalarField(self._eval, None, (), self.name)
            out[~far] = frame_word(plain, word, flat[~far], scheme)
        return out.reshape(q.shape[:-1])


_FAR = 1.5


def log_potential(density, quad=None, kernel: str = "plain") -> LogPotential:
    return LogPotential(density, quad, kernel)
