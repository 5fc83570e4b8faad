import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from heisenberg_iso.calculus import ScalarField, Singularity
from heisenberg_iso.errors import NonIntegrableSingularity, ZeroVolumeRegion
from heisenberg_iso.fields import log_gauge
from heisenberg_iso.group import IDENTITY, Point, gauge
from heisenberg_iso.quadrature import (
    UNIT_BALL_VOLUME,
    QuadratureSpec,
    adaptive_cubature,
    annulus_integral,
    ball_integral,
    gauge_polar,
    graph_surface_density,
    mc_integral,
    power_ball_integral,
    power_ball_integral_result,
    sphere_integral,
    unit_sphere_area,
)
from heisenberg_iso.domains import GaugeBall

ONE = lambda p: np.ones(p.shape[:-1])


def test_gauge_polar_chart_lands_on_sphere_with_jacobian():
    s = np.array([0.3, 1.0, 2.5])
    pts, jac = gauge_polar(s, np.array([0.2, -0.7, 0.9]), np.array([0.1, 2.0, 4.0]))
    np.testing.assert_allclose(gauge(pts), s, rtol=1e-13)
    assert np.all(jac > 0)


def test_unit_ball_volume_against_radial_oracle():
    # the unit ball is |t| <= sqrt(1 - |z|^4); integrate its height over the disc
    oracle, _ = integrate.quad(lambda r: 2 * np.sqrt(1 - r**4) * 2 * np.pi * r, 0, 1, epsabs=1e-13)
    assert oracle == pytest.approx(UNIT_BALL_VOLUME, rel=1e-10)
    assert ball_integral(ONE, IDENTITY, 1.0) == pytest.approx(UNIT_BALL_VOLUME, rel=1e-10)


def test_ball_moment_against_oracle():
    oracle, _ = integrate.dblquad(
        lambda r, th: (r * np.cos(th)) ** 2 * 2 * np.sqrt(1 - r**4) * r, 0, 2 * np.pi, 0, 1, epsabs=1e-12
    )
    got = ball_integral(lambda p: p[..., 0] ** 2, IDENTITY, 1.0, QuadratureSpec(rel_tol=1e-9))
    assert got == pytest.approx(oracle, rel=1e-7)
    assert got == pytest.approx(math.pi / 3, rel=1e-7)


def test_sphere_area_against_cartesian_graph_oracle():
    def dens(r, th):
        x1, x2 = r * np.cos(th), r * np.sin(th)
        return 2 * graph_surface_density(x1, x2) * r

    oracle, _ = integrate.dblquad(dens, 0, 2 * np.pi, 0, 1, epsabs=1e-11, epsrel=1e-11)
    assert unit_sphere_area() == pytest.approx(oracle, rel=1e-8)
    assert unit_sphere_area() == pytest.approx(12.37275037194577, rel=1e-10)


def test_sphere_integral_scales_with_cube_of_radius():
    a1 = sphere_integral(ONE, 1.0)
    assert sphere_integral(ONE, 3.0) == pytest.approx(27 * a1, rel=1e-10)
    assert sphere_integral(ONE, 2.0, center=Point(1.0, 2.0, -1.0)) == pytest.approx(8 * a1, rel=1e-8)


def test_coarea_for_radial_function():
    # int_{B(0,R)} rho^2 dv = 2 pi^2 R^6 / 6
    f = lambda p: gauge(p) ** 2
    assert ball_integral(f, IDENTITY, 2.0) == pytest.approx(2 * math.pi**2 * 64 / 6, rel=1e-8)


def test_integrable_log_singularity():
    q = QuadratureSpec(rel_tol=1e-7)
    assert ball_integral(log_gauge(), IDENTITY, 1.0, q) == pytest.approx(-math.pi**2 / 8, rel=1e-6)
    # off-centre ball containing the singular point: compare shells with difference
    c = Point(0.2, 0.1, 0.0)
    q = QuadratureSpec(rel_tol=1e-6)
    a = annulus_integral(log_gauge(), 0.5, 1.5, q, center=c)
    b = annulus_integral(log_gauge(), 0.5, 1.5, q, center=c, route="difference")
    assert a == pytest.approx(b, rel=1e-5)


def test_power_ball_exact_and_off_centre():
    assert power_ball_integral(2, IDENTITY, 3.0) == pytest.approx(math.pi**2 * 9, rel=1e-9)
    assert power_ball_integral(0, IDENTITY, 2.0) == pytest.approx(UNIT_BALL_VOLUME * 16, rel=1e-9)
    c = Point(0.4, 0.0, 0.3)
    fast = power_ball_integral(3, c, 1.0, QuadratureSpec(rel_tol=1e-8))
    sing = ScalarField(lambda p: gauge(p) ** -3.0, None, [Singularity(IDENTITY, 3.0)], "rho^-3")
    slow = ball_integral(sing, c, 1.0, QuadratureSpec(rel_tol=1e-4))
    assert fast == pytest.approx(slow, rel=1e-3)


def test_power_four_diverges():
    with pytest.raises(NonIntegrableSingularity):
        power_ball_integral_result(4, IDENTITY, 1.0)
    q = QuadratureSpec(divergence="truncate", core_depth=10)
    r = power_ball_integral_result(4, IDENTITY, 1.0, q)
    assert r.diverging
    assert r.value == pytest.approx(2 * math.pi**2 * 10 * math.log(2), rel=1e-8)
    # a ball away from the identity is fine
    assert math.isfinite(power_ball_integral(4, Point(0, 0, 9), 1.0))


def test_adaptive_cubature_smooth():
    r = adaptive_cubature(lambda u: np.exp(u[:, 0] + u[:, 1]), [0, 0], [1, 1], rel_tol=1e-12)
    assert r.converged
    assert r.value == pytest.approx((math.e - 1) ** 2, rel=1e-12)


def test_monte_carlo_seeded_and_consistent():
    ball = GaugeBall(Point(1.0, 0.0, 0.5), 1.0)
    q = QuadratureSpec(method="MonteCarlo", seed=5)
    a = mc_integral(ball, ONE, q, samples=200_000)
    b = mc_integral(ball, ONE, q, samples=200_000)
    assert a == b
    est, se = a
    assert abs(est - UNIT_BALL_VOLUME) < 4 * se
    with pytest.raises(ZeroVolumeRegion):
        mc_integral(Flat(), ONE, q, samples=10)


class Flat:
    def bounding_box(self):
        return (0.0, 0.0, 0.0), (1.0, 1.0, 0.0)

    def contains(self, pts):
        return np.zeros(len(pts), bool)


def test_quadrature_spec_validation():
    with pytest.raises(ValueError):
        QuadratureSpec(method="Simpson")
    with pytest.raises(ValueError):
        QuadratureSpec(rel_tol=0)
    d = QuadratureSpec().doubled()
    assert d.resolution == 16 and d.core_depth == 120


@settings(max_examples=15)
@given(st.floats(0.3, 5.0), st.floats(-1.0, 1.0), st.floats(-1.0, 1.0))
def test_dilation_law_for_ball_integrals(lam, a, b):
    f = lambda p: 1.0 + (a * p[..., 0] + b * p[..., 2]) ** 2
    lhs = ball_integral(f, IDENTITY, lam, QuadratureSpec(rel_tol=1e-9))
    fd = lambda p: f(np.stack([lam * p[..., 0], lam * p[..., 1], lam**2 * p[..., 2]], -1))
    rhs = lam**4 * ball_integral(fd, IDENTITY, 1.0, QuadratureSpec(rel_tol=1e-9))
    assert lhs == pytest.approx(rhs, rel=1e-7)
