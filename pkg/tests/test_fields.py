import math

import numpy as np
import pytest

from heisenberg_iso.errors import UnknownKind
from heisenberg_iso.fields import (
    BumpDensity,
    Kind,
    bump_profile_mass,
    grad_log_gauge,
    log_gauge,
    log_potential,
    make_bump,
    make_closed_form,
    symbolic_word,
)
from heisenberg_iso.group import IDENTITY, Point, gauge, inv, mul
from heisenberg_iso.quadrature import QuadratureSpec, ball_integral
from heisenberg_iso.weights import sample_cloud


def test_closed_form_values():
    assert log_gauge()(Point(1, 1, 2)) == pytest.approx(math.log(8 ** 0.25), rel=1e-14)
    assert make_closed_form(Kind.SublapLogGauge)(Point(1, 0, 0)) == pytest.approx(2.0)
    assert make_closed_form("SzegoNumerator")(Point(0, 0, 1)) == pytest.approx(1.0)
    assert make_closed_form(Kind.PowerGaugeLog, kappa=2)(Point(0, 0, 4)) == pytest.approx(-2 * math.log(2.0))
    assert make_closed_form(Kind.CoordinateMonomial, a=1, b=2, c=0, coef=3)(Point(2, 1, 5)) == pytest.approx(6.0)
    assert make_closed_form(Kind.LinearT, c2=-2)(Point(0, 0, 1.5)) == pytest.approx(-3.0)
    assert make_closed_form(Kind.PowerGauge, kappa=2)(Point(1, 1, 2)) == pytest.approx(8 ** -0.5)


def test_unknown_kind():
    with pytest.raises(UnknownKind):
        make_closed_form("Bessel")


def test_singular_sets():
    assert log_gauge().singular_set[0].point == IDENTITY
    assert make_closed_form(Kind.LinearT).singular_set == ()


def test_analytic_derivatives_through_order_four_match_fd():
    from heisenberg_iso.calculus import FD_ONLY, frame_word

    pts = sample_cloud(10, 1, (0.5, 3.0))
    for kind in (Kind.LogGauge, Kind.SublapLogGauge, Kind.PowerGaugeLog):
        f = make_closed_form(kind)
        for word in ("X", "YT", "XXY", "XYYX"):
            np.testing.assert_allclose(frame_word(f, word, pts, FD_ONLY), f.analytic(word, pts), rtol=1e-5, atol=1e-6)


def test_symbolic_commutator_exact():
    import sympy as sp

    x, y, t = sp.symbols("x y t", real=True)
    f = x**3 * t + y**2 * t**2 - x * y
    lhs = symbolic_word(f, "XY") - symbolic_word(f, "YX")
    assert sp.simplify(lhs + 4 * symbolic_word(f, "T")) == 0


def test_grad_log_gauge_closed_form():
    pts = sample_cloud(20, 2)
    gx, gy = grad_log_gauge(pts)
    L = log_gauge()
    np.testing.assert_allclose(gx, L.analytic("X", pts), rtol=1e-12)
    np.testing.assert_allclose(gy, L.analytic("Y", pts), rtol=1e-12, atol=1e-14)


def test_bump_mass_support_and_scaling():
    g = make_bump(IDENTITY, 0.5, 1.0)
    assert ball_integral(g, IDENTITY, 1.0, QuadratureSpec(rel_tol=1e-8)) == pytest.approx(1.0, abs=1e-4)
    assert g(Point(0.51, 0, 0)) == 0.0
    assert g(Point(0, 0, 0.26)) == 0.0
    s1 = make_bump(IDENTITY, 0.2).amplitude
    s2 = make_bump(IDENTITY, 0.1).amplitude
    assert s2 / s1 == pytest.approx(16.0, rel=1e-6)
    # calibrated mass agrees with the closed form of the profile integral
    assert 1.0 / make_bump(IDENTITY, 1.0).amplitude == pytest.approx(bump_profile_mass(1.0), rel=1e-8)


def test_bump_translated_support():
    c = Point(1.0, -2.0, 0.5)
    g = make_bump(c, 0.3, 2.0)
    assert g(c) == pytest.approx(g.amplitude)
    assert g(mul(c, Point(0.0, 0.0, 0.05))) > 0
    assert g(mul(c, Point(0.31, 0.0, 0.0))) == 0.0
    with pytest.raises(ValueError):
        BumpDensity(c, 0.0)


def test_log_potential_far_value():
    v = log_potential(make_bump(IDENTITY, 0.1))
    x = np.array([[4.0, 0.0, 0.0], [0.0, 0.0, 16.0], [8.0 ** 0.5, 8.0 ** 0.5, 0.0]])
    np.testing.assert_allclose(v(x), -math.log(4.0), atol=0.02)


def test_log_potential_zero_mass_decays():
    a = make_bump(Point(0.2, 0, 0), 0.1, 1.0)
    b = make_bump(Point(-0.2, 0, 0), 0.1, -1.0)
    v = log_potential([a, b])
    near = abs(v(Point(10.0, 0, 0)))
    far = abs(v(Point(100.0, 0, 0)))
    assert far < near / 5
    assert near < 0.1


def test_log_potential_left_invariant():
    c = Point(0.5, 0.3, -0.2)
    x = Point(1.2, -0.7, 0.9)
    v0 = log_potential(make_bump(IDENTITY, 0.2))
    vc = log_potential(make_bump(c, 0.2))
    assert vc(x) == pytest.approx(v0(mul(inv(c), x)), rel=1e-9)


def test_log_potential_near_support_matches_fine_quadrature():
    g = make_bump(IDENTITY, 0.3)
    x = Point(0.1, 0.05, 0.02)
    v = log_potential(g, QuadratureSpec(rel_tol=1e-5))(x)
    fine = log_potential(g, QuadratureSpec(rel_tol=1e-7))(x)
    assert v == pytest.approx(fine, rel=1e-4)


def test_ratio_kernel_is_constant_shift():
    g = make_bump(IDENTITY, 0.1)
    plain = log_potential(g)
    ratio = log_potential(g, kernel="ratio")
    pts = np.array([[2.0, 0, 0], [0, 3.0, 1.0], [0.5, 0.5, 0.5]])
    d = ratio(pts) - plain(pts)
    np.testing.assert_allclose(d, d[0], rtol=1e-9)
    # the shift is the average of log rho over the bump, roughly log eps
    assert -3.5 < d[0] < -2.0
    with pytest.raises(ValueError):
        log_potential(g, kernel="other")
