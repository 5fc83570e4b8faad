"""Integration on the Heisenberg group.

Volume integrals use Lebesgue measure ``dx dy dt`` (the Haar measure; the
contact volume ``theta ^ dtheta`` is a constant multiple of it) in gauge-polar
coordinates

    x = s sqrt(cos phi) cos(theta),  y = s sqrt(cos phi) sin(theta),  t = s^2 sin(phi)

for which ``dx dy dt = s^3 ds dphi dtheta`` exactly.  The polar angle is
reparametrised as ``phi = (pi/2) sin(pi sigma / 2)`` so the chart is smooth at
the t-axis.  Non-centred balls are reduced to centred ones by left
translation.

Point singularities declared on a field are cut out with a smooth partition
of unity: the piece near the singular point is integrated over dyadic shells
of a chart centred there (which also detects non-integrability), the rest by
adaptive cubature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .calculus import ScalarField, Singularity
from .errors import NonIntegrableSingularity, QuadratureBudgetExceeded, ZeroVolumeRegion
from .group import IDENTITY, Dilation, Point, as_points, dilate, gauge, inv, mul

UNIT_BALL_VOLUME = math.pi**2 / 2
# total dphi dtheta measure; the coarea factor of the gauge
COAREA_TOTAL = 2 * math.pi**2

METHODS = ("AdaptiveRefine", "ProductGauss", "MonteCarlo")


@dataclass(frozen=True)
class QuadratureSpec:
    method: str = "AdaptiveRefine"
    resolution: int = 8
    seed: int = 0
    rel_tol: float = 1e-6
    node_budget: int = 4_000_000
    core_depth: int = 60
    divergence: str = "raise"  # or "truncate": return the partial core sum
    abs_tol: float = 1e-14

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown quadrature method {self.method!r}")
        if self.resolution < 2:
            raise ValueError("resolution must be >= 2")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.divergence not in ("raise", "truncate"):
            raise ValueError("divergence must be 'raise' or 'truncate'")

    def doubled(self) -> "QuadratureSpec":
        return replace(
            self,
            resolution=2 * self.resolution,
            node_budget=2 * self.node_budget,
            rel_tol=self.rel_tol / 2,
            core_depth=2 * self.core_depth,
        )


@dataclass
class QuadResult:
    value: float
    error: float
    nevals: int
    converged: bool
    diverging: bool = False


# --- rules --------------------------------------------------------------------


@lru_cache(maxsize=None)
def gauss_legendre(n: int):
    return np.polynomial.legendre.leggauss(n)


# Embedded Gauss-Kronrod pairs on [-1, 1] (QUADPACK qk15 for the 7/15 pair);
# Gauss weights are zero on the Kronrod-only nodes.
_K15_XP = np.array([0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                    0.207784955007898467600689403773245, 0.0])
_K15_WP = np.array([0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                    0.204432940075298892414161999234649, 0.209482141084727828012999174891714])
_G7_WP = np.array([0.0, 0.129484966168869693270611432679082, 0.0, 0.279705391489276667901467771423780,
                   0.0, 0.381830050505118944950369775488975, 0.0, 0.417959183673469387755102040816327])
_K7_XP = np.array([0.96049126870802028342, 0.77459666924148337704, 0.43424374934680255800, 0.0])
_K7_WP = np.array([0.10465622602646726519, 0.26848808986833344073, 0.40139741477596222291,
                   0.45091653865847414235])
_G3_WP = np.array([0.0, 5 / 9, 0.0, 8 / 9])


def _symmetric(xp, *ws):
    x = np.concatenate([-xp[:-1], xp[::-1]])
    return (x,) + tuple(np.concatenate([w[:-1], w[::-1]]) for w in ws)


RULES = {"gk7": _symmetric(_K7_XP, _K7_WP, _G3_WP), "gk15": _symmetric(_K15_XP, _K15_WP, _G7_WP)}


_CHUNK = 1 << 19  # integrand points per call


@lru_cache(maxsize=None)
def _kronrod_tensor(d: int, rule: str):
    x = RULES[rule][0]
    grids = np.meshgrid(*([x] * d), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def _contract(vals, weights):
    """Contract an ``(m, k, ..., k)`` block with one weight vector per axis."""
    out = vals
    for w in weights:
        out = np.tensordot(out, w, axes=([1], [0]))
    return out


def _map_rule(lo, hi, n):
    """Gauss rule of ``n`` nodes on each interval ``[lo_i, hi_i]`` (vectorised)."""
    x, w = gauss_legendre(n)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    mid, half = (lo + hi) / 2, (hi - lo) / 2
    return mid[..., None] + half[..., None] * x, half[..., None] * w


def adaptive_cubature(
    F, lo, hi, rel_tol=1e-7, abs_tol=1e-14, budget=4_000_000, splits=None, rule="gk15", prerefine=None
) -> QuadResult:
    """Adaptive tensor Gauss-Kronrod cubature of ``F`` over the box ``[lo, hi]``.

    ``F`` maps an ``(n, d)`` array of box coordinates to ``n`` values.  Each cell
    is integrated with a Kronrod rule along every axis (``gk15``: 15 points,
    ``gk7``: 7 points); its error is the gap to the embedded Gauss rule,
    rescaled as in QUADPACK.  Swapping Kronrod for Gauss on
    one axis at a time shows which axis is under-resolved, and cells over
    their share of the tolerance are bisected along that axis only.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    d = lo.size
    splits = np.ones(d, dtype=int) if splits is None else np.asarray(splits, dtype=int)
    edges = [np.linspace(lo[i], hi[i], splits[i] + 1) for i in range(d)]
    idx = np.stack([g.ravel() for g in np.meshgrid(*[np.arange(s) for s in splits], indexing="ij")], -1)
    clo = np.stack([edges[i][idx[:, i]] for i in range(d)], -1)
    chi = np.stack([edges[i][idx[:, i] + 1] for i in range(d)], -1)
    if prerefine is not None:
        for _ in range(48):
            mark, axis = prerefine(clo, chi)
            if not mark.any() or len(clo) > 20_000:
                break
            ax = axis[mark]
            r = np.arange(int(mark.sum()))
            mid = (clo[mark][r, ax] + chi[mark][r, ax]) / 2
            a_hi, b_lo = chi[mark].copy(), clo[mark].copy()
            a_hi[r, ax] = mid
            b_lo[r, ax] = mid
            clo = np.concatenate([clo[~mark], clo[mark], b_lo])
            chi = np.concatenate([chi[~mark], a_hi, chi[mark]])
    nodes = _kronrod_tensor(d, rule)
    _, wk, wg = RULES[rule]
    m1 = len(wk)
    per_cell = len(nodes)

    def evaluate(clo, chi):
        mid, half = (clo + chi) / 2, (chi - clo) / 2
        pts = (mid[:, None, :] + half[:, None, :] * nodes[None]).reshape(-1, d)
        step = _CHUNK - _CHUNK % per_cell
        flat = np.concatenate([np.asarray(F(pts[i : i + step]), dtype=float) for i in range(0, len(pts), step)])
        vals = flat.reshape((len(clo),) + (m1,) * d)
        vol = np.prod(half, axis=1)
        qk = _contract(vals, [wk] * d) * vol
        qg = _contract(vals, [wg] * d) * vol
        axis_err = np.stack(
            [np.abs(qk - _contract(vals, [wg if j == i else wk for j in range(d)]) * vol) for i in range(d)],
            -1,
        )
        # QUADPACK-style scaling of the Kronrod-Gauss gap
        mean = qk / np.where(vol == 0, 1.0, vol)
        dev = np.abs(vals - mean.reshape((-1,) + (1,) * d))
        resasc = _contract(dev, [wk] * d) * vol
        raw = np.abs(qk - qg)
        with np.errstate(divide="ignore", invalid="ignore"):
            err = np.where(resasc > 0, resasc * np.minimum(1.0, (200 * raw / resasc) ** 1.5), raw)
        bad = ~np.isfinite(qk)
        err[bad] = np.inf
        axis_err[bad] = 1.0
        return qk, err, np.argmax(axis_err, axis=1)

    nevals = len(clo) * per_cell
    # the budget covers adaptive refinement, not the (pre-refined) starting mesh
    budget = budget + nevals
    vals, errs, axes = evaluate(clo, chi)
    done_val, done_err = 0.0, 0.0
    min_width = 1e-13 * np.maximum(np.abs(hi - lo), 1e-300)
    while True:
        total = done_val + vals.sum()
        err = done_err + errs.sum()
        tol = max(rel_tol * abs(total), abs_tol)
        if err <= tol:
            return QuadResult(float(total), float(err), nevals, True)
        share = max(tol - done_err, 0.0) / max(len(errs), 1)
        split = errs > share
        rows = np.arange(len(clo))
        tiny = (chi - clo)[rows, axes] <= min_width[axes]
        # cells at machine resolution are frozen
        freeze = split & tiny
        if freeze.any():
            done_val += vals[freeze].sum()
            done_err += errs[freeze].sum()
        keep = ~split
        split = split & ~tiny
        nsplit = int(split.sum())
        if nsplit == 0 or nevals + 2 * nsplit * per_cell > budget:
            total = done_val + vals[keep].sum() + vals[split].sum()
            return QuadResult(float(total), float(err), nevals, nsplit == 0 and err <= tol)
        plo, phi_ = clo[split], chi[split]
        ax = axes[split]
        r = np.arange(nsplit)
        mid = (plo[r, ax] + phi_[r, ax]) / 2
        hi_a = phi_.copy()
        hi_a[r, ax] = mid
        lo_b = plo.copy()
        lo_b[r, ax] = mid
        nlo_c = np.concatenate([plo, lo_b])
        nhi_c = np.concatenate([hi_a, phi_])
        cvals, cerrs, caxes = evaluate(nlo_c, nhi_c)
        nevals += len(nlo_c) * per_cell
        clo = np.concatenate([clo[keep], nlo_c])
        chi = np.concatenate([chi[keep], nhi_c])
        vals = np.concatenate([vals[keep], cvals])
        errs = np.concatenate([errs[keep], cerrs])
        axes = np.concatenate([axes[keep], caxes])


# --- gauge-polar chart ------------------------------------------------------------


def gauge_polar(s, sigma, theta):
    """Chart point and Jacobian ``s^3 dphi/dsigma``."""
    phi = (np.pi / 2) * np.sin(np.pi * sigma / 2)
    dphi = (np.pi**2 / 4) * np.cos(np.pi * sigma / 2)
    sc = s * np.sqrt(np.clip(np.cos(phi), 0.0, None))
    pts = np.stack([sc * np.cos(theta), sc * np.sin(theta), s * s * np.sin(phi)], axis=-1)
    return pts, s**3 * dphi


def _smooth_step(v):
    """C-infinity transition from 0 (v <= 0) to 1 (v >= 1)."""
    v = np.clip(v, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(v > 0, np.exp(-1.0 / np.where(v > 0, v, 1.0)), 0.0)
        b = np.where(v < 1, np.exp(-1.0 / np.where(v < 1, 1.0 - v, 1.0)), 0.0)
    return a / (a + b)


def _cutoff(rho_rel, delta):
    """1 inside ``delta/2``, 0 outside ``delta``."""
    return 1.0 - _smooth_step(2.0 * rho_rel / delta - 1.0)


@dataclass
class _Core:
    q: np.ndarray  # singular point in chart coordinates
    delta: float
    order: float


_DIVERGENT_RATIO = 0.999


def _core_layers(F, core: _Core, quad: QuadratureSpec, with_cutoff=True) -> QuadResult:
    """Integrate ``F * cutoff`` over ``B(q, delta)`` in dyadic shells centred at ``q``."""
    n_ang = quad.resolution + 4
    sig, wsig = gauss_legendre(n_ang)
    nth = 2 * n_ang
    th = 2 * np.pi * (np.arange(nth) + 0.5) / nth
    wth = np.full(nth, 2 * np.pi / nth)
    x_s, w_s = gauss_legendre(6)
    S, TH = np.meshgrid(sig, th, indexing="ij")
    WA = np.outer(wsig, wth).ravel()
    total, contribs = 0.0, []
    nevals = 0
    diverging = False
    for j in range(quad.core_depth):
        a, b = core.delta / 2 ** (j + 1), core.delta / 2**j
        if j == 0 and with_cutoff:
            # the cutoff transition spans this whole shell: composite rule
            s_nodes, ws = _map_rule(np.linspace(a, b, 17)[:-1], np.linspace(a, b, 17)[1:], 8)
            s_nodes, ws = s_nodes.ravel(), ws.ravel()
        else:
            s_nodes = (a + b) / 2 + (b - a) / 2 * x_s
            ws = (b - a) / 2 * w_s
        s3 = s_nodes[:, None]
        pts, jac = gauge_polar(s3, S.ravel()[None, :], TH.ravel()[None, :])
        y = mul(core.q, pts)
        vals = np.asarray(F(y.reshape(-1, 3)), dtype=float).reshape(jac.shape)
        if with_cutoff and j == 0:
            vals = vals * _cutoff(s3, core.delta)
        c = float(np.sum(vals * jac * ws[:, None] * WA[None, :]))
        nevals += vals.size
        contribs.append(c)
        total += c
        if j >= 4:
            r = [contribs[-k] / contribs[-k - 1] if contribs[-k - 1] != 0 else 0.0 for k in (1, 2, 3)]
            if min(r) > _DIVERGENT_RATIO:
                diverging = True
                if j >= 8:
                    break
                continue
            diverging = False
            rate = r[0]
            if 0 <= rate < _DIVERGENT_RATIO:
                # shells of a power singularity form a geometric series
                tail = c * rate / (1 - rate)
                tail_err = abs(c) * (abs(r[0] - r[1]) / (1 - rate) ** 2 + 1e-15)
                if tail_err <= 0.05 * quad.rel_tol * max(abs(total), quad.abs_tol):
                    return QuadResult(total + tail, tail_err, nevals, True)
    if diverging:
        if quad.divergence == "raise":
            raise NonIntegrableSingularity(
                f"dyadic shells around {core.q} stop decaying (declared order {core.order})"
            )
        return QuadResult(total, math.inf, nevals, False, diverging=True)
    if quad.divergence == "truncate":
        return QuadResult(total, math.inf, nevals, False)
    return QuadResult(total, abs(contribs[-1]), nevals, False)


def _shell_integral(
    F,
    s_lo: float,
    s_hi: float,
    singular: Sequence[Singularity],
    quad: QuadratureSpec,
    strict: bool = True,
) -> QuadResult:
    """``int F dv`` over the centred shell ``s_lo <= rho <= s_hi``.

    ``singular`` holds singular points already expressed in chart coordinates.
    """
    if s_hi <= s_lo:
        return QuadResult(0.0, 0.0, 0, True)
    cores: list[_Core] = []
    pts = [np.asarray(s.point, dtype=float) for s in singular]
    for i, s in enumerate(singular):
        q = pts[i]
        rq = gauge(q)
        margin = min(s_hi - rq, rq - s_lo) if s_lo > 0 else s_hi - rq
        if rq <= 1e-12 * s_hi and s_lo == 0:
            margin = s_hi
        if margin <= 0:
            continue
        others = [gauge(mul(inv(q), pts[k])) for k in range(len(pts)) if k != i]
        delta = min([margin] + [o / 2 for o in others]) / 2
        if delta > 1e-14 * s_hi:
            cores.append(_Core(q, delta, s.order))

    results = []
    for core in cores:
        results.append(_core_layers(F, core, quad))

    def chart_integrand(u):
        s = u[:, 0]
        y, jac = gauge_polar(s, u[:, 1], u[:, 2])
        keep = np.ones(len(s))
        for core in cores:
            rel = gauge(mul(inv(core.q), y))
            keep = keep * (1.0 - _cutoff(rel, core.delta))
        out = np.zeros(len(s))
        m = keep > 0
        if m.any():
            out[m] = np.asarray(F(y[m]), dtype=float) * keep[m] * jac[m]
        return out

    # a core at the chart origin has a radial cutoff band: panel edges cover it
    off_centre = [c for c in cores if gauge(c.q) > 1e-12 * s_hi]
    extra_edges = [e for c in cores if c not in off_centre for e in (c.delta / 2, c.delta)]

    def near_core(clo, chi):
        """Cells that meet the cutoff band of a core but are coarse next to it."""
        if not off_centre:
            return np.zeros(len(clo), dtype=bool), np.zeros(len(clo), dtype=int)
        g = np.array([0.0, 0.5, 1.0])
        frac = np.stack([a.ravel() for a in np.meshgrid(g, g, g, indexing="ij")], -1)
        u = clo[:, None, :] + (chi - clo)[:, None, :] * frac[None]
        y, _ = gauge_polar(u[..., 0], u[..., 1], u[..., 2])
        centre = y[:, 13:14, :]
        diam = 2 * np.max(gauge(mul(inv(centre), y)), axis=1)
        # physical extent along each chart axis, face centre to face centre
        ext = np.stack([gauge(mul(inv(y[:, lo_i]), y[:, hi_i])) for lo_i, hi_i in ((4, 22), (10, 16), (12, 14))], -1)
        mark = np.zeros(len(clo), dtype=bool)
        for core in off_centre:
            dist = np.min(gauge(mul(inv(core.q), y)), axis=1)
            mark |= (dist < core.delta) & (diam > core.delta)
        return mark, np.argmax(ext, axis=1)

    res = quad.resolution
    if s_lo > 0 and s_hi / s_lo > 2:
        # geometric radial panels, ratio <= 2
        npan = int(math.ceil(math.log2(s_hi / s_lo)))
        redges = s_lo * (s_hi / s_lo) ** (np.arange(npan + 1) / npan)
    else:
        redges = np.array([s_lo, s_hi])
    if extra_edges:
        redges = np.unique(np.concatenate([redges, [e for e in extra_edges if s_lo < e < s_hi]]))
    total = QuadResult(0.0, 0.0, 0, True)
    budget = quad.node_budget
    if quad.method == "ProductGauss":
        n = res
        sig, wsig = gauss_legendre(n)
        nth = 2 * n
        th = 2 * np.pi * (np.arange(nth) + 0.5) / nth
        val = 0.0
        nev = 0
        for a, b in zip(redges[:-1], redges[1:]):
            sn, ws = _map_rule(a, b, n)
            U = np.stack(np.meshgrid(sn, sig, th, indexing="ij"), -1).reshape(-1, 3)
            W = np.einsum("i,j,k->ijk", ws, wsig, np.full(nth, 2 * np.pi / nth)).ravel()
            val += float(np.sum(chart_integrand(U) * W))
            nev += len(U)
        total = QuadResult(val, math.nan, nev, True)
    else:
        for a, b in zip(redges[:-1], redges[1:]):
            r = adaptive_cubature(
                chart_integrand,
                [a, -1.0, 0.0],
                [b, 1.0, 2 * np.pi],
                rel_tol=quad.rel_tol,
                abs_tol=quad.abs_tol,
                budget=max(budget - total.nevals, 1),
                splits=[1, 1, 2],
                prerefine=near_core,
            )
            total = QuadResult(total.value + r.value, total.error + r.error, total.nevals + r.nevals, total.converged and r.converged)
    for r in results:
        total = QuadResult(
            total.value + r.value,
            total.error + r.error,
            total.nevals + r.nevals,
            total.converged and r.converged,
            total.diverging or r.diverging,
        )
    if strict and not total.converged and not total.diverging:
        raise QuadratureBudgetExceeded(
            f"shell [{s_lo}, {s_hi}] did not reach rel_tol {quad.rel_tol} within {quad.node_budget} nodes"
        )
    return total


def _translated(f, center):
    c = np.asarray(center, dtype=float)
    if not np.any(c):
        return f._evaluate if isinstance(f, ScalarField) else f, list(getattr(f, "singular_set", ()))
    ev = f._evaluate if isinstance(f, ScalarField) else f
    sing = [
        Singularity(Point.from_array(mul(inv(c), np.asarray(s.point))), s.order)
        for s in getattr(f, "singular_set", ())
    ]
    return (lambda y: ev(mul(c, y))), sing


def ball_integral_result(f, center, radius: float, quad: QuadratureSpec, strict: bool = True) -> QuadResult:
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    if radius == 0:
        return QuadResult(0.0, 0.0, 0, True)
    F, sing = _translated(f, center)
    if quad.method == "MonteCarlo":
        return _mc_ball(F, radius, quad)
    return _shell_integral(F, 0.0, float(radius), sing, quad, strict)


def ball_integral(f, center, radius: float, quad: Optional[QuadratureSpec] = None) -> float:
    """``int_{B(center, radius)} f dv``."""
    return ball_integral_result(f, center, radius, quad or QuadratureSpec()).value


def annulus_integral(f, r0: float, r1: float, quad: Optional[QuadratureSpec] = None, center=IDENTITY, route: str = "shells") -> float:
    """``int_{r0 <= rho(center^-1 y) <= r1} f dv``; ``route`` is ``shells`` or ``difference``."""
    quad = quad or QuadratureSpec()
    if r0 < 0 or r1 < r0:
        raise ValueError("need 0 <= r0 <= r1")
    if r0 == r1:
        return 0.0
    if route == "difference":
        return ball_integral(f, center, r1, quad) - ball_integral(f, center, r0, quad)
    F, sing = _translated(f, center)
    return _shell_integral(F, float(r0), float(r1), sing, quad).value


def _mc_ball(F, radius, quad):
    rng = np.random.default_rng(quad.seed)
    n = quad.resolution**3 * 64
    u = rng.random((n, 3))
    # uniform on the gauge ball: s^3 ds, phi and theta uniform
    s = radius * u[:, 0] ** 0.25
    phi = np.pi * (u[:, 1] - 0.5)
    th = 2 * np.pi * u[:, 2]
    sc = s * np.sqrt(np.cos(phi))
    y = np.stack([sc * np.cos(th), sc * np.sin(th), s * s * np.sin(phi)], -1)
    vals = np.asarray(F(y), dtype=float)
    vol = UNIT_BALL_VOLUME * radius**4
    return QuadResult(float(vol * vals.mean()), float(vol * vals.std(ddof=1) / math.sqrt(n)), n, True)


# --- power weights ------------------------------------------------------------


def _ray_intervals(omega, x, radius):
    """Intervals of ``s >= 0`` with ``rho(x^-1 . delta_s omega) <= radius``.

    For a unit-gauge direction ``omega`` the left side to the fourth power is a
    monic quartic in ``s``, so the set is at most two intervals.  Returns
    ``(lo, hi)`` arrays of shape ``(n, 2)``; empty slots have ``lo == hi``.
    """
    a, b, c = omega[:, 0], omega[:, 1], omega[:, 2]
    x1, x2, x3 = (float(v) for v in x)
    m = 2 * (x1 * b - x2 * a)
    # |s w - z_x|^2 = s^2 |w|^2 - 2 s <w, z_x> + |z_x|^2
    w2 = a * a + b * b
    lin = -2 * (a * x1 + b * x2)
    z2 = x1 * x1 + x2 * x2
    # (w2 s^2 + lin s + z2)^2 + (c s^2 + m s - x3)^2 - r^4
    c4 = w2 * w2 + c * c
    c3 = 2 * w2 * lin + 2 * c * m
    c2 = lin * lin + 2 * w2 * z2 + m * m - 2 * c * x3
    c1 = 2 * lin * z2 - 2 * m * x3
    c0 = np.full_like(a, z2 * z2 + x3 * x3 - radius**4)
    coef = np.stack([c3, c2, c1, c0], -1) / c4[:, None]
    n = len(a)
    comp = np.zeros((n, 4, 4))
    comp[:, 0, :] = -coef
    comp[:, 1, 0] = comp[:, 2, 1] = comp[:, 3, 2] = 1.0
    roots = np.linalg.eigvals(comp)
    smax = radius + gauge(np.asarray(x, dtype=float))
    real = np.where(np.abs(roots.imag) <= 1e-7 * smax, roots.real, np.nan)
    real = np.where((real > 0) & (real < smax), real, np.nan)
    bps = np.sort(np.concatenate([np.zeros((n, 1)), real, np.full((n, 1), smax)], axis=1), axis=1)
    bps = np.where(np.isnan(bps), smax, bps)
    mids = (bps[:, :-1] + bps[:, 1:]) / 2

    def quartic(sv):
        return ((w2[:, None] * sv + lin[:, None]) * sv + z2) ** 2 + ((c[:, None] * sv + m[:, None]) * sv - x3) ** 2

    inside = quartic(mids) <= radius**4
    lo, hi = bps[:, :-1], bps[:, 1:]
    lo = np.where(inside, lo, 0.0)
    hi = np.where(inside, hi, 0.0)
    return lo, hi


def power_ball_integral_result(kappa: float, center, radius: float, quad: Optional[QuadratureSpec] = None) -> QuadResult:
    """``int_{B(center, radius)} rho^-kappa dv`` with the radial part done exactly.

    In gauge-polar coordinates about the identity the integrand is
    ``s^(3 - kappa)``; the ball meets each ray in at most two intervals (the
    roots of a quartic), so only a 2-D angular integral remains.  For
    ``kappa >= 4`` and a ball containing the identity the integral diverges; with
    ``divergence="truncate"`` the radial integral starts at
    ``radius * 2^-core_depth`` instead.
    """
    quad = quad or QuadratureSpec()
    c = np.asarray(center, dtype=float)
    if radius <= 0:
        return QuadResult(0.0, 0.0, 0, True)
    contains_origin = gauge(c) < radius
    e = 4.0 - kappa
    if e <= 0 and contains_origin:
        if quad.divergence == "raise":
            raise NonIntegrableSingularity(f"rho^-{kappa} is not integrable near the identity")
    s_floor = radius * 2.0 ** (-quad.core_depth) if e <= 0 else 0.0

    def radial(lo, hi):
        lo = np.maximum(lo, s_floor)
        hi = np.maximum(hi, lo)
        if e == 0:
            with np.errstate(divide="ignore", invalid="ignore"):
                v = np.where(hi > lo, np.log(hi / np.where(lo > 0, lo, 1.0)), 0.0)
            return v.sum(axis=1)
        return ((hi**e - lo**e) / e).sum(axis=1)

    def integrand(u):
        phi = (np.pi / 2) * np.sin(np.pi * u[:, 0] / 2)
        dphi = (np.pi**2 / 4) * np.cos(np.pi * u[:, 0] / 2)
        sc = np.sqrt(np.clip(np.cos(phi), 0.0, None))
        om = np.stack([sc * np.cos(u[:, 1]), sc * np.sin(u[:, 1]), np.sin(phi)], -1)
        lo, hi = _ray_intervals(om, c, radius)
        return radial(lo, hi) * dphi

    r = adaptive_cubature(
        integrand, [-1.0, 0.0], [1.0, 2 * np.pi], quad.rel_tol, quad.abs_tol, quad.node_budget, splits=[4, 8]
    )
    diverging = e <= 0 and contains_origin
    if not r.converged and quad.divergence == "raise":
        raise QuadratureBudgetExceeded("power-weight ball integral did not converge")
    return QuadResult(r.value, r.error, r.nevals, r.converged, diverging)


def power_ball_integral(kappa: float, center, radius: float, quad: Optional[QuadratureSpec] = None) -> float:
    """``int_{B(center, radius)} rho^-kappa dv``.

    Balls around the identity use the exact radial rule; balls away from it
    see a smooth integrand and go through :func:`ball_integral`.
    """
    quad = quad or QuadratureSpec()
    c = np.asarray(center, dtype=float)
    if gauge(c) <= radius:
        return power_ball_integral_result(kappa, c, radius, quad).value
    f = lambda y: gauge(y) ** (-kappa)
    return ball_integral(f, Point.from_array(c), radius, quad)


# --- gauge spheres ------------------------------------------------------------


def sphere_density(r):
    """Surface density of the unit gauge sphere per ``r dr dtheta`` (graph chart)."""
    r = np.asarray(r, dtype=float)
    return np.sqrt(r**2 * (1 + 3 * r**4) / ((1 - r**2) * (1 + r**2)))


def graph_surface_density(x1, x2, sign=1.0):
    """``sqrt((u_x1 - x2)^2 + (u_x2 + x1)^2)`` for ``u = +-sqrt(1 - |x|^4)``."""
    r2 = x1**2 + x2**2
    u = sign * np.sqrt(1 - r2**2)
    ux1 = -2 * r2 * x1 / u
    ux2 = -2 * r2 * x2 / u
    return np.sqrt((ux1 - x2) ** 2 + (ux2 + x1) ** 2)


def _sphere_chart(u, th):
    """Unit-sphere chart with ``r = 1 - u^2``; returns both hemispheres and weight."""
    r = 1.0 - u * u
    # density * r dr / du with the 1/sqrt(1 - r) edge factor cancelled
    w = 2.0 * r * r * np.sqrt((1 + 3 * r**4) / ((1 + r) * (1 + r * r)))
    h = np.sqrt(np.clip(1 - r**4, 0.0, None))
    x, y = r * np.cos(th), r * np.sin(th)
    up = np.stack([x, y, h], -1)
    dn = np.stack([x, y, -h], -1)
    return up, dn, w


def sphere_integral_result(f, radius: float, quad: Optional[QuadratureSpec] = None, center=IDENTITY) -> QuadResult:
    quad = quad or QuadratureSpec()
    if not radius > 0:
        raise ValueError("radius must be positive")
    F, _ = _translated(f, center)
    d = Dilation(radius)

    def integrand(v):
        up, dn, w = _sphere_chart(v[:, 0], v[:, 1])
        vals = np.asarray(F(dilate(d, up)), dtype=float) + np.asarray(F(dilate(d, dn)), dtype=float)
        return vals * w

    p = max(1, quad.resolution // 4)
    if quad.method == "ProductGauss":
        n = quad.resolution
        un, wu = _map_rule(0.0, 1.0, n)
        nth = 4 * n
        th = 2 * np.pi * (np.arange(nth) + 0.5) / nth
        V = np.stack(np.meshgrid(un, th, indexing="ij"), -1).reshape(-1, 2)
        W = np.outer(wu, np.full(nth, 2 * np.pi / nth)).ravel()
        val = float(np.sum(integrand(V) * W))
        return QuadResult(radius**3 * val, math.nan, len(V), True)
    r = adaptive_cubature(
        integrand, [0.0, 0.0], [1.0, 2 * np.pi], quad.rel_tol, quad.abs_tol, quad.node_budget, splits=[2 * p, 4 * p]
    )
    if not r.converged:
        raise QuadratureBudgetExceeded("sphere integral did not converge")
    return QuadResult(radius**3 * r.value, radius**3 * r.error, r.nevals, True)


def sphere_integral(f, radius: float, quad: Optional[QuadratureSpec] = None, center=IDENTITY) -> float:
    """``int_{dB(center, radius)} f dsigma`` with the graph-chart surface measure."""
    return sphere_integral_result(f, radius, quad, center).value


@lru_cache(maxsize=None)
def unit_sphere_area(rel_tol: float = 1e-12) -> float:
    one = lambda q: np.ones(q.shape[:-1])
    return sphere_integral(one, 1.0, QuadratureSpec(rel_tol=rel_tol))


# --- Monte Carlo ----------------------------------------------------------------


def mc_integral(region, f, quad: Optional[QuadratureSpec] = None, samples: Optional[int] = None):
    """Seeded Monte Carlo over a region with ``contains`` and ``bounding_box``.

    Returns ``(estimate, std_error)``; identical seeds give identical output.
    """
    quad = quad or QuadratureSpec(method="MonteCarlo")
    lo, hi = (np.asarray(b, dtype=float) for b in region.bounding_box())
    box = float(np.prod(hi - lo))
    if not box > 0:
        raise ZeroVolumeRegion("bounding box has zero volume")
    n = samples or quad.resolution**3 * 64
    rng = np.random.default_rng(quad.seed)
    pts = lo + (hi - lo) * rng.random((n, 3))
    inside = np.asarray(region.contains(pts), dtype=bool)
    if not inside.any():
        raise ZeroVolumeRegion("no samples landed in the region")
    ev = f._evaluate if isinstance(f, ScalarField) else f
    vals = np.zeros(n)
    vals[inside] = np.asarray(ev(pts[inside]), dtype=float)
    est = box * vals.mean()
    se = box * vals.std(ddof=1) / math.sqrt(n)
    return float(est), float(se)


# --- log kernel ---------------------------------------------------------------


def log_kernel_quad(g, x, quad: Optional[QuadratureSpec] = None) -> float:
    """``int log(1/rho(y^-1 x)) g(y) dv(y)`` for a bump density ``g``.

    When ``x`` is inside (or near) the support, the log singularity at ``y = x``
    is cut out and integrated in dyadic shells.
    """
    quad = quad or QuadratureSpec()
    x = np.asarray(x, dtype=float)

    def F(y):
        rel = mul(inv(y), x)
        with np.errstate(divide="ignore"):
            return -np.log(gauge(rel)) * g(y)

    field = ScalarField(F, None, [Singularity(Point.from_array(x), 0.0)], "log-kernel")
    return ball_integral(field, g.center, g.epsilon, quad)


@lru_cache(maxsize=32)
def _bump_chart_rule(n: int):
    """Fixed product rule on the unit gauge ball: chart points and weights."""
    s, ws = _map_rule(0.0, 1.0, n)
    sig, wsig = gauss_legendre(n)
    nth = 2 * n
    th = 2 * np.pi * (np.arange(nth) + 0.5) / nth
    S, SG, TH = np.meshgrid(s, sig, th, indexing="ij")
    pts, jac = gauge_polar(S.ravel(), SG.ravel(), TH.ravel())
    W = np.einsum("i,j,k->ijk", ws, wsig, np.full(nth, 2 * np.pi / nth)).ravel() * jac
    return pts, W


def _bump_rule(g, quad: QuadratureSpec):
    """Nodes (bump-centred chart coordinates) and weights of ``g dv``."""
    n = max(8, quad.resolution + 4)
    pts, W = _bump_chart_rule(n)
    eps = g.epsilon
    ys = dilate(Dilation(eps), pts)
    gw = g(mul(np.asarray(g.center, dtype=float), ys)) * W * eps**4
    keep = gw != 0
    return ys[keep], gw[keep]


def _relative(ys: np.ndarray, xs: np.ndarray):
    """Components of ``ys[j]^-1 . xs[i]`` as three ``(len(xs), len(ys))`` arrays."""
    a, b, c = ys[:, 0], ys[:, 1], ys[:, 2]
    X, Y, T = xs[:, 0:1], xs[:, 1:2], xs[:, 2:3]
    return X - a, Y - b, T - c + 2 * (a * Y - b * X)


def _log_gauge_word(word: str, x, y, t) -> np.ndarray:
    """Frame derivatives of ``log rho``: closed forms through order two, sympy beyond."""
    r2 = x * x + y * y
    D = r2 * r2 + t * t
    if word == "X":
        return (r2 * x + t * y) / D
    if word == "Y":
        return (r2 * y - t * x) / D
    if word == "XX":
        A = r2 * x + t * y
        return 3 * r2 / D - 4 * A * A / (D * D)
    if word == "YY":
        B = r2 * y - t * x
        return 3 * r2 / D - 4 * B * B / (D * D)
    if word == "T":
        return t / (2 * D)
    return _shared_log_gauge().analytic(word, np.stack([x, y, t], -1))


@lru_cache(maxsize=1)
def _shared_log_gauge():
    """One instance, so compiled derivative words are reused across calls."""
    from .fields import log_gauge

    return log_gauge()


def log_kernel_word_far(g, xs, word: str, quad: Optional[QuadratureSpec] = None, far: float = 1.5) -> np.ndarray:
    """Frame derivative ``D_word`` of ``int log(1/rho(y^-1 x)) g(y) dv(y)``.

    Frame fields are left-invariant, so ``D_word`` in ``x`` falls on the kernel:
    the result is ``-int (D_word log rho)(y^-1 x) g(y) dv(y)``.  Every point must
    lie at gauge distance above ``far * epsilon`` from the bump centre, where the
    differentiated kernel is smooth on the support.
    """
    quad = quad or QuadratureSpec()
    xs = as_points(xs).reshape(-1, 3)
    rel_x = mul(inv(np.asarray(g.center, dtype=float)), xs)
    if np.any(gauge(rel_x) <= far * g.epsilon):
        raise ValueError("kernel derivatives are only available away from the bump support")
    ys, gw = _bump_rule(g, quad)
    out = np.empty(len(xs))
    chunk = max(1, 500_000 // max(len(ys), 1))
    for k in range(0, len(xs), chunk):
        out[k : k + chunk] = -(_log_gauge_word(word, *_relative(ys, rel_x[k : k + chunk])) @ gw)
    return out


def log_kernel_quad_many(g, xs, quad: Optional[QuadratureSpec] = None, far: float = 1.5) -> np.ndarray:
    """Vectorised :func:`log_kernel_quad` over an ``(n, 3)`` array of points.

    Points at gauge distance above ``far * epsilon`` from the bump centre share
    one fixed product rule; the rest go through the singular rule one by one.
    """
    quad = quad or QuadratureSpec()
    xs = as_points(xs).reshape(-1, 3)
    c = np.asarray(g.center, dtype=float)
    eps = g.epsilon
    out = np.empty(len(xs))
    rel_x = mul(inv(c), xs)
    dist = gauge(rel_x)
    is_far = dist > far * eps
    ys, gw = _bump_rule(g, quad)
    idx = np.flatnonzero(is_far)
    chunk = max(1, 2_000_000 // max(len(ys), 1))
    for k in range(0, len(idx), chunk):
        sel = idx[k : k + chunk]
        # y^-1 x in bump-centred coordinates: (c ys)^-1 (c rel_x) = ys^-1 rel_x
        x, y, t = _relative(ys, rel_x[sel])
        r2 = x * x + y * y
        out[sel] = -(0.25 * np.log(r2 * r2 + t * t) @ gw)
    for i in np.flatnonzero(~is_far):
        out[i] = log_kernel_quad(g, xs[i], quad)
    return out
