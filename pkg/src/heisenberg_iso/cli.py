"""Batch verification front end.

Each subcommand runs one family of checks and writes a CSV or JSON report with
one row per check.  Configuration comes from dataclass defaults, an optional
TOML file (one table per subcommand plus top-level ``seed``), and command-line
flags, in that order of precedence.

Exit status: 0 when every row passes, 1 when at least one row fails, 2 on an
invalid configuration.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as _dt
import hashlib
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

try:  # Python 3.11+
    import tomllib as _toml
except ModuleNotFoundError:  # pragma: no cover
    import tomli as _toml

from . import __version__
from .calculus import (
    C_T,
    FD_ONLY,
    ScalarField,
    commutator_XY,
    frame_word,
    paneitz_prime,
    pluriharmonic_residual,
    sublaplacian,
    webster_scalar,
)
from .errors import ConfigInvalid, HeisenbergError
from .fields import (
    Kind,
    log_gauge,
    log_potential,
    make_bump,
    make_closed_form,
    polynomial_field,
    sublap_log_gauge,
    szego_numerator,
)
from .group import IDENTITY, Point, gauge
from .isoperimetry import (
    GaugeBall,
    example46_sweep,
    half_space_pairs,
    relative_iso_constant,
    standard_sweep,
)
from .quadrature import (
    UNIT_BALL_VOLUME,
    QuadratureSpec,
    ball_integral,
    gauge_polar,
    mc_integral,
    sphere_integral,
    unit_sphere_area,
)
from .weights import RadiusGrid, a1_constant, power_weight, sample_cloud

PROVENANCE = ("paper", "trivial", "derived-oracle")
COLUMNS = ("test_id", "inputs", "computed", "reference", "provenance", "error", "tolerance", "passed", "runtime_s")


# --- report rows ------------------------------------------------------------


@dataclass
class ReportRow:
    test_id: str
    inputs: Dict[str, Any]
    computed: float
    reference: Optional[float] = None
    provenance: Optional[str] = None
    error: Optional[float] = None
    tolerance: Optional[float] = None
    passed: bool = True
    runtime_s: float = 0.0

    def __post_init__(self):
        if self.reference is not None and self.provenance not in PROVENANCE:
            raise ValueError(f"row {self.test_id}: reference needs a provenance tag in {PROVENANCE}")
        if self.provenance is not None and self.provenance not in PROVENANCE:
            raise ValueError(f"row {self.test_id}: unknown provenance {self.provenance!r}")


def check_row(test_id, inputs, computed, reference, provenance, tolerance, relative=True, error=None) -> ReportRow:
    """Row that passes when ``|computed - reference|`` (relative by default) is within ``tolerance``."""
    computed, reference = float(computed), float(reference)
    if error is None:
        error = abs(computed - reference)
        if relative:
            error /= max(abs(reference), 1e-300)
    passed = bool(np.isfinite(error) and error <= tolerance)
    return ReportRow(test_id, inputs, computed, reference, provenance, float(error), float(tolerance), passed)


def bound_row(test_id, inputs, computed, tolerance, provenance="derived-oracle", lower=False) -> ReportRow:
    """Row that passes when ``computed <= tolerance`` (or ``>=`` with ``lower``)."""
    computed = float(computed)
    ok = computed >= tolerance if lower else computed <= tolerance
    return ReportRow(test_id, inputs, computed, None, None, computed, float(tolerance), bool(np.isfinite(computed) and ok))


def info_row(test_id, inputs, computed) -> ReportRow:
    return ReportRow(test_id, inputs, float(computed))


def failed_row(test_id, inputs, exc: BaseException) -> ReportRow:
    inputs = dict(inputs, exception=f"{type(exc).__name__}: {exc}")
    return ReportRow(test_id, inputs, math.nan, None, None, None, None, False)


# --- configs ----------------------------------------------------------------


@dataclass
class QuadConfig:
    rel_tol: float = 1e-6
    resolution: int = 8
    mc_samples: int = 1_000_000

    def spec(self, seed: int, **kw) -> QuadratureSpec:
        return QuadratureSpec(rel_tol=self.rel_tol, resolution=self.resolution, seed=seed, **kw)


@dataclass
class KernelsConfig:
    points: int = 50
    gauge_range: List[float] = field(default_factory=lambda: [0.5, 5.0])
    fd_tol: float = 1e-6
    analytic_tol: float = 1e-10
    paneitz_tol: float = 1e-3
    commutator_fields: int = 20
    commutator_tol: float = 1e-8


@dataclass
class PluriharmonicConfig:
    points: int = 20
    gauge_range: List[float] = field(default_factory=lambda: [0.5, 5.0])
    tol: float = 1e-6
    control_min: float = 0.1


@dataclass
class WebsterConfig:
    points: int = 20
    gauge_range: List[float] = field(default_factory=lambda: [0.5, 2.0])
    c2: List[float] = field(default_factory=lambda: [1.0, -1.0, 2.0, -2.0])
    tol: float = 1e-6


@dataclass
class DecayConfig:
    epsilon: float = 0.1
    center: List[float] = field(default_factory=lambda: [0.0, 0.0, 0.0])
    radii: List[float] = field(default_factory=lambda: [4.0, 8.0, 16.0, 32.0, 64.0])
    grad_slope: List[float] = field(default_factory=lambda: [-1.15, -0.85])
    lap_slope: List[float] = field(default_factory=lambda: [-2.2, -1.8])
    sphere_rel_tol: float = 1e-4
    doubling_tol: float = 0.01


@dataclass
class A1Config:
    kappas: List[float] = field(default_factory=lambda: [1.0, 2.0, 3.0])
    samples: int = 8
    radii_count: int = 13
    stable_tol: float = 0.10
    divergent_kappa: float = 4.0
    stages: int = 3
    divergent_samples: int = 4
    divergent_radii_count: int = 9
    core_depth: int = 15
    rel_tol: float = 1e-4


@dataclass
class IsoperimetricConfig:
    kappas: List[float] = field(default_factory=lambda: [0.0, 1.0, 2.0, 3.0])
    stable_tol: float = 0.05
    volume_tol: float = 0.005
    homogeneity_radii: List[float] = field(default_factory=lambda: [0.5, 2.0, 10.0])
    homogeneity_tol: float = 1e-6
    mc_sigmas: float = 3.0
    relative: bool = True
    relative_rel_tol: float = 1e-5
    relative_stable_tol: float = 0.10
    relative_min_pairs: int = 12
    half_tol: float = 1e-3


@dataclass
class CounterexampleConfig:
    radii: List[float] = field(default_factory=lambda: [2.0**k for k in range(1, 11)])
    check_radii: List[float] = field(default_factory=lambda: [2.0, 4.0, 8.0, 16.0])
    tol: float = 0.01
    min_growth: float = 5.0
    epsilon: Optional[float] = 0.1
    mollified_from: float = 4.0
    eps_list: List[float] = field(default_factory=lambda: [0.4, 0.2, 0.1, 0.05])
    sup_grid: int = 9


SECTIONS = {
    "verify-kernels": KernelsConfig,
    "pluriharmonic": PluriharmonicConfig,
    "webster": WebsterConfig,
    "decay": DecayConfig,
    "a1": A1Config,
    "isoperimetric": IsoperimetricConfig,
    "counterexample": CounterexampleConfig,
}


@dataclass
class RunConfig:
    subcommand: str
    params: Any
    quad: QuadConfig = field(default_factory=QuadConfig)
    seed: int = 0
    out: Optional[str] = None
    format: str = "csv"
    strict: bool = False
    timestamp: bool = True

    def resolved(self) -> dict:
        """Everything that determines report content (hashed into the report)."""
        return {
            "subcommand": self.subcommand,
            "seed": self.seed,
            "quad": dataclasses.asdict(self.quad),
            "params": dataclasses.asdict(self.params),
        }

    def config_hash(self) -> str:
        """Git-style blob hash of the canonical JSON of :meth:`resolved`."""
        body = json.dumps(self.resolved(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()


def _coerce(path: str, value, proto, annotation: str):
    """Convert ``value`` to the type of the default ``proto``."""
    try:
        if "List" in annotation:
            if isinstance(value, str):
                value = parse_number_list(value, path)
            if not isinstance(value, (list, tuple)):
                raise ConfigInvalid(path, "expected a list")
            return [float(v) for v in value]
        if isinstance(proto, bool):
            if isinstance(value, str):
                if value.lower() in ("1", "true", "yes"):
                    return True
                if value.lower() in ("0", "false", "no"):
                    return False
                raise ConfigInvalid(path, f"expected a boolean, got {value!r}")
            return bool(value)
        if isinstance(proto, int):
            if isinstance(value, float) and not value.is_integer():
                raise ConfigInvalid(path, f"expected an integer, got {value!r}")
            return int(value)
        if isinstance(proto, float) or (proto is None and "float" in annotation):
            if value is None or (isinstance(value, str) and value.lower() == "none"):
                if proto is None:
                    return None
                raise ConfigInvalid(path, "value required")
            return float(value)
    except (TypeError, ValueError) as e:
        raise ConfigInvalid(path, str(e)) from None
    return value


def parse_number_list(text: str, path: str) -> List[float]:
    """``"2,4,8"``; ``"2,4,...,1024"`` expands the geometric progression set by the first two terms."""
    parts = [p.strip() for p in str(text).split(",") if p.strip()]
    if not parts:
        raise ConfigInvalid(path, "empty list")
    try:
        if "..." in parts:
            k = parts.index("...")
            if k != 2 or len(parts) != 4:
                raise ConfigInvalid(path, "use 'a,b,...,c'")
            a, b, c = float(parts[0]), float(parts[1]), float(parts[3])
            if not (a > 0 and b > a and c >= b):
                raise ConfigInvalid(path, "progression 'a,b,...,c' needs 0 < a < b <= c")
            n = math.log(c / a) / math.log(b / a)
            if abs(n - round(n)) > 1e-9:
                raise ConfigInvalid(path, f"{c:g} is not a term of the progression {a:g}, {b:g}, ...")
            return [a * (b / a) ** j for j in range(int(round(n)) + 1)]
        return [float(p) for p in parts]
    except ValueError:
        raise ConfigInvalid(path, f"not a number list: {text!r}") from None


def _apply(obj, updates: dict, prefix: str):
    hints = {f.name: str(f.type) for f in dataclasses.fields(obj)}
    for key, value in updates.items():
        name = key.replace("-", "_")
        if name not in hints:
            raise ConfigInvalid(f"{prefix}.{key}", "unknown field")
        setattr(obj, name, _coerce(f"{prefix}.{key}", value, getattr(obj, name), hints[name]))


def _validate(cfg: RunConfig):
    sec = cfg.subcommand
    for obj, prefix in ((cfg.params, sec), (cfg.quad, "quad")):
        for f in dataclasses.fields(obj):
            v = getattr(obj, f.name)
            path = f"{prefix}.{f.name}"
            if (f.name.endswith("tol") or f.name == "epsilon") and v is not None and not (v > 0):
                raise ConfigInvalid(path, "must be positive")
            if isinstance(v, int) and not isinstance(v, bool) and f.name in (
                "points", "samples", "radii_count", "stages", "resolution", "mc_samples", "sup_grid"
            ) and v < 1:
                raise ConfigInvalid(path, "must be positive")
            if isinstance(v, list) and not v:
                raise ConfigInvalid(path, "empty list")
    p = cfg.params
    if hasattr(p, "radii"):
        r = p.radii
        if any(not (x > 0) for x in r) or any(b <= a for a, b in zip(r, r[1:])):
            raise ConfigInvalid(f"{sec}.radii", "radii must be positive and strictly increasing")
        if sec == "counterexample" and min(r) <= 1.0:
            raise ConfigInvalid(f"{sec}.radii", "annulus radii must exceed the inner radius 1")
    if hasattr(p, "gauge_range"):
        g = p.gauge_range
        if len(g) != 2 or not (0 < g[0] < g[1]):
            raise ConfigInvalid(f"{sec}.gauge_range", "need two values 0 < lo < hi")
    if hasattr(p, "radii_count") and p.radii_count < 8:
        raise ConfigInvalid(f"{sec}.radii_count", "radius grid needs at least 8 radii")
    if not (0 <= cfg.seed < 2**64):
        raise ConfigInvalid("seed", "must be an unsigned 64-bit integer")
    if cfg.format not in ("csv", "json"):
        raise ConfigInvalid("format", "must be csv or json")


def load_config(subcommand: str, config_path: Optional[str] = None, overrides: Optional[dict] = None) -> RunConfig:
    """Defaults, then the TOML file, then ``overrides`` (flag values)."""
    if subcommand not in SECTIONS:
        raise ConfigInvalid("subcommand", f"unknown subcommand {subcommand!r}")
    cfg = RunConfig(subcommand, SECTIONS[subcommand]())
    if config_path:
        try:
            with open(config_path, "rb") as fh:
                data = _toml.load(fh)
        except OSError as e:
            raise ConfigInvalid("config", str(e)) from None
        except _toml.TOMLDecodeError as e:
            raise ConfigInvalid("config", f"TOML parse error: {e}") from None
        for key, value in data.items():
            if key == subcommand:
                _apply(cfg.params, value, subcommand)
            elif key == "quad":
                _apply(cfg.quad, value, "quad")
            elif key in SECTIONS:
                continue  # tables for other subcommands are ignored
            elif key in ("seed", "format", "out"):
                setattr(cfg, key, _coerce(key, value, getattr(cfg, key) if key != "out" else "", "str"))
            else:
                raise ConfigInvalid(key, "unknown top-level key")
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key in ("seed", "format", "out", "strict", "timestamp"):
            setattr(cfg, key, value)
        elif key.startswith("quad."):
            _apply(cfg.quad, {key[5:]: value}, "quad")
        else:
            _apply(cfg.params, {key: value}, subcommand)
    _validate(cfg)
    return cfg


# --- shared helpers -----------------------------------------------------------


def _timed(fn: Callable[[], List[ReportRow]]) -> Callable[[], List[ReportRow]]:
    def run():
        t0 = time.perf_counter()
        rows = fn()
        dt = (time.perf_counter() - t0) / max(len(rows), 1)
        for r in rows:
            r.runtime_s = dt
        return rows

    return run


def _points(n: int, seed: int, gauge_range) -> np.ndarray:
    return sample_cloud(n, seed, tuple(gauge_range))


def _max_rel(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b) / np.abs(b)))


def _log_slope(x, y) -> float:
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


# --- subcommands --------------------------------------------------------------


def _kernels(cfg: RunConfig) -> List[Callable[[], List[ReportRow]]]:
    p: KernelsConfig = cfg.params
    pts = _points(p.points, cfg.seed, p.gauge_range)
    L = log_gauge()
    S = make_closed_form(Kind.SublapLogGauge)
    inp = {"points": p.points, "seed": cfg.seed, "gauge_range": list(p.gauge_range)}
    szego = szego_numerator(pts)

    def fd():
        a = _max_rel(sublaplacian(L, pts, FD_ONLY), sublap_log_gauge(pts))
        b = _max_rel(sublaplacian(S, pts, FD_ONLY) / 2.0, 4.0 * szego)
        return [
            check_row("kernels.sublap_log_rho.fd", inp, a, 0.0, "paper", p.fd_tol, error=a),
            check_row("kernels.sublap_z2_over_rho4.fd", inp, b, 0.0, "paper", p.fd_tol, error=b),
        ]

    def paneitz():
        c = _max_rel(paneitz_prime(L, pts, FD_ONLY), 16.0 * szego)
        return [check_row("kernels.paneitz_log_rho.fd", dict(inp, constant=16), c, 0.0, "derived-oracle", p.paneitz_tol, error=c)]

    def ladder():
        a = _max_rel(L.analytic("XX", pts) + L.analytic("YY", pts), sublap_log_gauge(pts))
        b = _max_rel((S.analytic("XX", pts) + S.analytic("YY", pts)) / 2.0, 4.0 * szego)
        c = _max_rel(paneitz_prime(L, pts), 16.0 * szego)
        return [
            check_row("kernels.sublap_log_rho.analytic", inp, a, 0.0, "paper", p.analytic_tol, error=a),
            check_row("kernels.sublap_z2_over_rho4.analytic", inp, b, 0.0, "paper", p.analytic_tol, error=b),
            check_row("kernels.paneitz_log_rho.analytic", dict(inp, constant=16), c, 0.0, "derived-oracle", p.analytic_tol, error=c),
        ]

    def commutator():
        rng = np.random.default_rng(cfg.seed)
        worst = 0.0
        for _ in range(p.commutator_fields):
            terms = []
            for _ in range(4):
                a, b, c = rng.integers(0, 3, size=3)
                terms.append(f"({rng.normal():.6f})*x**{a}*y**{b}*t**{c}")
            f = polynomial_field("+".join(terms))
            q = _points(4, int(rng.integers(2**32)), p.gauge_range)
            lhs = commutator_XY(f, q, FD_ONLY)
            rhs = -4.0 * frame_word(f, "T", q)
            scale = np.maximum(np.abs(rhs), 1.0)
            worst = max(worst, float(np.max(np.abs(lhs - rhs) / scale)))
        return [check_row("frame.commutator", {"fields": p.commutator_fields, "seed": cfg.seed}, worst, 0.0, "paper", p.commutator_tol, error=worst)]

    return [fd, paneitz, ladder, commutator]


def _pluri_family() -> Dict[str, ScalarField]:
    return {
        "x": polynomial_field("x"),
        "y": polynomial_field("y"),
        "t": polynomial_field("t"),
        "x^2-y^2": polynomial_field("x**2-y**2"),
        "2xy": polynomial_field("2*x*y"),
        "Re[(x+iy)(t+i|z|^2)]": polynomial_field("x*t-y*(x**2+y**2)"),
        "log rho": log_gauge(),
    }


def _pluriharmonic(cfg: RunConfig):
    p: PluriharmonicConfig = cfg.params
    pts = _points(p.points, cfg.seed, p.gauge_range)
    inp = {"points": p.points, "seed": cfg.seed, "c_T": C_T}
    jobs = []
    for name, f in _pluri_family().items():
        for route, scheme in (("fd", FD_ONLY), ("analytic", None)):

            def job(name=name, f=f, route=route, scheme=scheme):
                kw = {} if scheme is None else {"scheme": scheme}
                r = float(np.max(np.abs(pluriharmonic_residual(f, pts, normalized=True, **kw))))
                return [check_row(f"pluri.{route}.{name}", dict(inp, field=name), r, 0.0, "derived-oracle", p.tol, error=r)]

            jobs.append(job)

    def control():
        f = polynomial_field("t**2")
        r = float(np.min(np.abs(pluriharmonic_residual(f, pts, FD_ONLY))))
        return [
            bound_row("pluri.control.t^2", dict(inp, field="t^2", exact=2 * C_T), r, p.control_min, lower=True),
        ]

    return jobs + [control]


def _webster(cfg: RunConfig):
    p: WebsterConfig = cfg.params
    pts = _points(p.points, cfg.seed, p.gauge_range)
    r2 = pts[:, 0] ** 2 + pts[:, 1] ** 2
    jobs = []
    for c2 in p.c2:

        def job(c2=c2):
            u = make_closed_form(Kind.LinearT, c2=c2)
            e = make_closed_form(Kind.ExpLinearT, c2=c2)
            ref = -4.0 * c2**2 * r2 * np.exp(c2 * pts[:, 2])
            direct = -sublaplacian(e, pts, FD_ONLY)
            via = webster_scalar(u, pts, FD_ONLY) * np.exp(2 * u(pts))
            inp = {"points": p.points, "seed": cfg.seed, "c2": c2}
            a, b = _max_rel(direct, ref), _max_rel(via, ref)
            return [
                check_row(f"webster.minus_sublap_exp.c2={c2:g}", inp, a, 0.0, "paper", p.tol, error=a),
                check_row(f"webster.curvature_formula.c2={c2:g}", inp, b, 0.0, "paper", p.tol, error=b),
            ]

        jobs.append(job)
    return jobs


def decay_report(epsilon: float, radii: Sequence[float], quad: QuadratureSpec, center=IDENTITY, sphere_quad=None) -> dict:
    """Sphere averages of ``|grad_b v|``, ``|Delta_b v|`` and ``|v|`` for a unit bump potential.

    Returns the averages per radius and the fitted log-log slopes of the two
    derivative averages.
    """
    sphere_quad = sphere_quad or quad
    v = log_potential(make_bump(center, epsilon), quad)
    area1 = unit_sphere_area()
    grad, lap, absv = [], [], []
    for r in radii:
        area = area1 * r**3
        g = lambda q: np.hypot(frame_word(v, "X", q), frame_word(v, "Y", q))
        l = lambda q: np.abs(sublaplacian(v, q))
        grad.append(sphere_integral(g, r, sphere_quad, center) / area)
        lap.append(sphere_integral(l, r, sphere_quad, center) / area)
        absv.append(sphere_integral(lambda q: np.abs(v(q)), r, sphere_quad, center) / area)
    return {
        "radii": list(map(float, radii)),
        "grad": grad,
        "lap": lap,
        "abs_v": absv,
        "grad_slope": _log_slope(radii, grad),
        "lap_slope": _log_slope(radii, lap),
    }


def _decay(cfg: RunConfig):
    p: DecayConfig = cfg.params
    quad = cfg.quad.spec(cfg.seed)
    sq = QuadratureSpec(rel_tol=p.sphere_rel_tol, seed=cfg.seed)
    inp = {"epsilon": p.epsilon, "radii": list(p.radii)}
    state = {}

    def main():
        rep = decay_report(p.epsilon, p.radii, quad, Point(*p.center), sq)
        state["rep"] = rep
        rows = []
        lo, hi = p.grad_slope
        gs = rep["grad_slope"]
        rows.append(ReportRow("decay.grad_slope", dict(inp, band=[lo, hi]), gs, -1.0, "paper", abs(gs + 1.0), (hi - lo) / 2, bool(lo <= gs <= hi)))
        lo, hi = p.lap_slope
        ls = rep["lap_slope"]
        rows.append(ReportRow("decay.lap_slope", dict(inp, band=[lo, hi]), ls, -2.0, "paper", abs(ls + 2.0), (hi - lo) / 2, bool(lo <= ls <= hi)))
        for r, a, b, c in zip(rep["radii"], rep["grad"], rep["lap"], rep["abs_v"]):
            rows.append(info_row(f"decay.avg_grad.r={r:g}", {"r": r}, a))
            rows.append(info_row(f"decay.avg_lap.r={r:g}", {"r": r}, b))
            rows.append(info_row(f"decay.avg_abs_v.r={r:g}", {"r": r}, c))
        return rows

    def doubling():
        rep = state["rep"]
        r = [p.radii[0], p.radii[-1]]
        rep2 = decay_report(p.epsilon, r, quad.doubled(), Point(*p.center), sq.doubled())
        rows = []
        for key in ("grad", "lap"):
            base = [rep[key][0], rep[key][-1]]
            err = max(abs(a - b) / abs(a) for a, b in zip(base, rep2[key]))
            rows.append(bound_row(f"decay.doubling.{key}", {"radii": r}, err, p.doubling_tol, "trivial"))
        return rows

    return [main, doubling]


def _a1(cfg: RunConfig):
    p: A1Config = cfg.params
    quad = QuadratureSpec(rel_tol=p.rel_tol, seed=cfg.seed)
    jobs = []
    for kappa in p.kappas:

        def job(kappa=kappa):
            w = power_weight(kappa)
            grid = RadiusGrid(count=p.radii_count)
            e1 = a1_constant(w, sample_cloud(p.samples, cfg.seed), grid, quad)
            e2 = a1_constant(w, sample_cloud(2 * p.samples, cfg.seed), grid.refined(), quad)
            inp = {"kappa": kappa, "samples": [p.samples, 2 * p.samples], "radii": [grid.count, grid.refined().count]}
            err = abs(e2.estimate - e1.estimate) / e1.estimate
            return [
                info_row(f"a1.kappa={kappa:g}.base", inp, e1.estimate),
                bound_row(f"a1.kappa={kappa:g}.stability", inp, err, p.stable_tol),
                info_row(f"a1.kappa={kappa:g}.refined", inp, e2.estimate),
            ]

        jobs.append(job)

    def divergent():
        w = power_weight(p.divergent_kappa)
        q = QuadratureSpec(rel_tol=p.rel_tol, seed=cfg.seed, divergence="truncate", core_depth=p.core_depth)
        n, grid = p.divergent_samples, RadiusGrid(count=p.divergent_radii_count)
        rows, prev = [], None
        for stage in range(p.stages + 1):
            est = a1_constant(w, sample_cloud(n, cfg.seed), grid, q).estimate
            inp = {"kappa": p.divergent_kappa, "stage": stage, "samples": n, "radii": grid.count, "core_depth": q.core_depth}
            if prev is None:
                rows.append(info_row(f"a1.kappa={p.divergent_kappa:g}.stage0", inp, est))
            else:
                rows.append(bound_row(f"a1.kappa={p.divergent_kappa:g}.stage{stage}.ratio", dict(inp, estimate=est), est / prev, 2.0, lower=True))
            prev, n, grid, q = est, 2 * n, grid.refined(), dataclasses.replace(q, core_depth=2 * q.core_depth)
        return rows

    return jobs + [divergent]


def _isoperimetric(cfg: RunConfig):
    p: IsoperimetricConfig = cfg.params
    quad = cfg.quad.spec(cfg.seed)
    jobs = []

    def volume():
        exact = UNIT_BALL_VOLUME
        one = lambda q: np.ones(q.shape[:-1])
        vq = ball_integral(one, IDENTITY, 1.0, quad)
        vm, se = mc_integral(GaugeBall(IDENTITY, 1.0), one, quad, samples=cfg.quad.mc_samples)
        rows = [
            check_row("volume.B1.quadrature", {"rel_tol": quad.rel_tol}, vq, exact, "derived-oracle", p.volume_tol),
            check_row("volume.B1.monte_carlo", {"samples": cfg.quad.mc_samples, "seed": cfg.seed}, vm, exact, "derived-oracle", p.volume_tol),
            bound_row("volume.B1.agreement_in_se", {"se": se}, abs(vq - vm) / se, p.mc_sigmas, "derived-oracle"),
        ]
        for R in p.homogeneity_radii:
            v = ball_integral(one, IDENTITY, R, quad)
            rows.append(check_row(f"volume.homogeneity.R={R:g}", {"R": R}, v, R**4 * vq, "derived-oracle", p.homogeneity_tol))
        return rows

    jobs.append(volume)
    for kappa in p.kappas:

        def job(kappa=kappa):
            a = standard_sweep(kappa, quad)
            b = standard_sweep(kappa, quad.doubled())
            inp = {"kappa": kappa, "domains": len(a.rows)}
            err = abs(b.max_quotient() - a.max_quotient()) / a.max_quotient()
            rows = [info_row(f"iso.kappa={kappa:g}.{r.domain}", {"kappa": kappa, "weighted_volume": r.weighted_volume, "weighted_perimeter": r.weighted_perimeter}, r.quotient) for r in a.rows]
            rows.append(bound_row(f"iso.kappa={kappa:g}.max_quotient_finite", inp, float(np.isfinite(a.max_quotient())), 1.0, "trivial", lower=True))
            rows.append(info_row(f"iso.kappa={kappa:g}.max_quotient", inp, a.max_quotient()))
            rows.append(bound_row(f"iso.kappa={kappa:g}.doubling", inp, err, p.stable_tol))
            return rows

        jobs.append(job)

    if p.relative:

        def relative():
            pairs = half_space_pairs()
            q = QuadratureSpec(rel_tol=p.relative_rel_tol, seed=cfg.seed)
            a = relative_iso_constant(pairs, q)
            b = relative_iso_constant(pairs, q.doubled())
            n = len(a.ratios)
            inp = {"pairs": n, "rel_tol": q.rel_tol}
            half = float(np.max(np.abs(a.fractions - 0.5)))
            return [
                bound_row("relative.pairs", inp, n, p.relative_min_pairs, "trivial", lower=True),
                info_row("relative.constant", inp, a.constant),
                bound_row("relative.doubling", inp, abs(b.constant - a.constant) / a.constant, p.relative_stable_tol),
                check_row("relative.half_fraction", inp, 0.5 + half, 0.5, "trivial", p.half_tol, relative=False),
            ]

        jobs.append(relative)
    return jobs


def _u_eps_sup(eps: float, quad: QuadratureSpec, n: int) -> float:
    """Sup of ``|u_eps - log(1/rho)|`` on a chart grid of the annulus ``1 <= rho <= 4``."""
    v = log_potential(make_bump(IDENTITY, eps), quad)
    s = np.geomspace(1.0, 4.0, n)
    sig = np.linspace(-1.0, 1.0, n)
    th = np.array([0.0, 1.0, 2.5])
    S, SG, TH = np.meshgrid(s, sig, th, indexing="ij")
    pts, _ = gauge_polar(S.ravel(), SG.ravel(), TH.ravel())
    return float(np.max(np.abs(v(pts) + np.log(gauge(pts)))))


def _counterexample(cfg: RunConfig):
    p: CounterexampleConfig = cfg.params
    quad = cfg.quad.spec(cfg.seed)
    area1 = unit_sphere_area()

    def columns(sweep, radii, tag, exact: bool):
        rows = []
        inner = area1  # the inner sphere of A(1, R) has radius 1
        outer = sweep.perimeters - inner if exact else None
        for R, row in zip(radii, sweep.rows):
            rows.append(info_row(f"{tag}.quotient.R={R:g}", {"R": R, "weighted_volume": row.weighted_volume, "weighted_perimeter": row.weighted_perimeter}, row.quotient))
        if exact:
            spread = float(np.max(np.abs(outer - area1)) / area1)
            rows.append(bound_row(f"{tag}.sphere_perimeter_constant", {"radii": list(radii), "reference": area1}, spread, p.tol))
            for R, row in zip(radii, sweep.rows):
                if R in p.check_radii:
                    rows.append(check_row(f"{tag}.volume.R={R:g}", {"R": R}, row.weighted_volume, 2 * math.pi**2 * math.log(R), "derived-oracle", p.tol))
        else:
            per = sweep.perimeters
            spread = float((per.max() - per.min()) / per.mean())
            rows.append(bound_row(f"{tag}.perimeter_constant", {"radii": list(radii)}, spread, p.tol))
            slope = sweep.log_slope / (2 * math.pi**2)
            rows.append(check_row(f"{tag}.volume_log_slope", {"radii": list(radii)}, slope, 1.0, "derived-oracle", p.tol))
        q = sweep.quotients
        inc = bool(np.all(np.diff(q) > 0))
        rows.append(ReportRow(f"{tag}.quotient_increasing", {"radii": list(radii)}, float(inc), 1.0, "derived-oracle", float(not inc), 0.0, inc))
        return rows, q

    state = {}

    def exact():
        sweep = example46_sweep(p.radii, None, quad)
        rows, q = columns(sweep, p.radii, "example46", True)
        state["growth"] = q[-1] / q[0]
        state["exact"] = sweep
        rows.append(bound_row("example46.quotient_growth", {"radii": [p.radii[0], p.radii[-1]]}, q[-1] / q[0], p.min_growth, lower=True))
        return rows

    jobs = [exact]
    if p.epsilon is not None:

        def mollified():
            radii = [r for r in p.radii if r >= p.mollified_from]
            sweep = example46_sweep(radii, p.epsilon, quad)
            rows, q = columns(sweep, radii, f"example46.eps={p.epsilon:g}", False)
            ex = state["exact"]
            qe = [row.quotient for R, row in zip(p.radii, ex.rows) if R >= p.mollified_from]
            g, ge = q[-1] / q[0], qe[-1] / qe[0]
            rows.append(check_row(f"example46.eps={p.epsilon:g}.quotient_growth", {"radii": [radii[0], radii[-1]]}, g, ge, "derived-oracle", p.tol))
            return rows

        jobs.append(mollified)

    def convergence():
        sups = [_u_eps_sup(e, quad, p.sup_grid) for e in p.eps_list]
        rows = [info_row(f"u_eps.sup.eps={e:g}", {"epsilon": e, "grid": p.sup_grid}, s) for e, s in zip(p.eps_list, sups)]
        worst = float(max(np.diff(sups).max(), 0.0))
        rows.append(bound_row("u_eps.sup_nonincreasing", {"eps": list(p.eps_list)}, worst, 0.0, "paper"))
        return rows

    jobs.append(convergence)
    return jobs


COMMANDS = {
    "verify-kernels": _kernels,
    "pluriharmonic": _pluriharmonic,
    "webster": _webster,
    "decay": _decay,
    "a1": _a1,
    "isoperimetric": _isoperimetric,
    "counterexample": _counterexample,
}


# --- running and writing ------------------------------------------------------


def run(cfg: RunConfig) -> List[ReportRow]:
    """Execute the subcommand; module errors become failed rows unless ``cfg.strict``."""
    rows: List[ReportRow] = []
    for job in COMMANDS[cfg.subcommand](cfg):
        name = getattr(job, "__name__", "job")
        try:
            rows.extend(_timed(job)())
        except (HeisenbergError, ValueError, ArithmeticError, KeyError) as e:
            if cfg.strict:
                raise
            rows.append(failed_row(f"{cfg.subcommand}.{name}", {}, e))
    return rows


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


def _meta(cfg: RunConfig) -> dict:
    meta = {
        "tool": "heisenberg-iso",
        "version": __version__,
        "subcommand": cfg.subcommand,
        "seed": cfg.seed,
        "config_hash": cfg.config_hash(),
        "config": cfg.resolved(),
    }
    if cfg.timestamp:
        meta["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    return meta


def render(cfg: RunConfig, rows: Sequence[ReportRow]) -> str:
    """Report text.  Without timestamps the output depends only on the config."""
    if not cfg.timestamp:
        for r in rows:
            r.runtime_s = 0.0
    meta = _meta(cfg)
    if cfg.format == "json":
        payload = {"meta": meta, "rows": [_jsonable(dataclasses.asdict(r)) for r in rows]}
        return json.dumps(payload, indent=1, sort_keys=False) + "\n"
    buf = io.StringIO()
    for k, v in meta.items():
        buf.write(f"# {k}: {json.dumps(_jsonable(v), sort_keys=True)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        d = dataclasses.asdict(r)
        d["inputs"] = json.dumps(_jsonable(d["inputs"]), sort_keys=True, separators=(",", ":"))
        w.writerow([_fmt(d[c]) for c in COLUMNS])
    return buf.getvalue()


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="heisenberg-iso", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="subcommand", required=True)
    for name, klass in SECTIONS.items():
        sp = sub.add_parser(name, help=f"run the {name} checks")
        sp.add_argument("--config", metavar="PATH", help="TOML config file")
        sp.add_argument("--out", metavar="PATH", help="report path (default: stdout)")
        sp.add_argument("--format", choices=("csv", "json"), default=None)
        sp.add_argument("--seed", type=int, default=None, help="unsigned 64-bit seed")
        sp.add_argument("--strict", action="store_true", default=None, help="raise module errors instead of failing rows")
        sp.add_argument("--no-timestamp", dest="timestamp", action="store_false", default=None, help="omit timestamp and runtimes")
        sp.add_argument("--quad-rel-tol", dest="quad.rel_tol", default=None, help="quadrature relative tolerance")
        for f in dataclasses.fields(klass):
            flag = "--" + f.name.replace("_", "-")
            sp.add_argument(flag, dest=f.name, default=None, metavar="VALUE", help=f"{name}.{f.name}")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    args = vars(ap.parse_args(argv))
    sub = args.pop("subcommand")
    config_path = args.pop("config")
    try:
        cfg = load_config(sub, config_path, args)
    except ConfigInvalid as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    rows = run(cfg)
    text = render(cfg, rows)
    if cfg.out:
        Path(cfg.out).write_text(text)
    else:
        sys.stdout.write(text)
    failed = [r.test_id for r in rows if not r.passed]
    for t in failed:
        print(f"FAILED {t}", file=sys.stderr)
    return 1 if failed else 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
