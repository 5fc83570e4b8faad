import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heisenberg_iso.calculus import (
    C_T,
    FD_ONLY,
    FDScheme,
    ScalarField,
    Singularity,
    central_weights,
    commutator_XY,
    constant_field,
    frame_derivative,
    frame_word,
    horizontal_gradient_sq,
    paneitz_prime,
    pluriharmonic_residual,
    sublaplacian,
    webster_scalar,
)
from heisenberg_iso.errors import SingularPoint, StepTooCoarse
from heisenberg_iso.fields import Kind, log_gauge, make_closed_form, polynomial_field, sublap_log_gauge, szego_numerator
from heisenberg_iso.group import IDENTITY, Dilation, Point, dilate, mul
from heisenberg_iso.weights import sample_cloud

from conftest import points

L = log_gauge()


def fd_only(f):
    """Same field with analytic derivatives removed."""
    return ScalarField(f._evaluate, None, f.singular_set, f.name)


@pytest.mark.parametrize("scheme", [FD_ONLY, FDScheme()])
def test_log_gauge_first_derivatives(scheme):
    p = Point(1, 0, 0)
    assert frame_derivative(L, "X", p, scheme) == pytest.approx(1.0, rel=1e-9)
    assert frame_derivative(L, "Y", p, scheme) == pytest.approx(0.0, abs=1e-9)
    assert horizontal_gradient_sq(L, p, scheme) == pytest.approx(1.0, rel=1e-9)
    assert horizontal_gradient_sq(L, Point(0, 0, 1), scheme) == pytest.approx(0.0, abs=1e-9)


def test_t_derivative_and_constant():
    t = polynomial_field("t")
    assert frame_derivative(t, "T", Point(0.3, 0.2, -1), FD_ONLY) == pytest.approx(1.0, rel=1e-10)
    c = constant_field(3.0)
    assert horizontal_gradient_sq(c, Point(1, 2, 3)) == 0.0
    with pytest.raises(ValueError):
        frame_derivative(t, "Z", Point(0, 0, 0))


def test_sublaplacian_examples():
    assert sublaplacian(L, Point(1, 0, 0), FD_ONLY) == pytest.approx(2.0, rel=1e-8)
    f = make_closed_form(Kind.SublapLogGauge)
    # Delta_b(|z|^2/rho^4) = 4 (t^2 - |z|^4)/rho^8 is 4 at (0,0,1); the field is twice that
    assert sublaplacian(f, Point(0, 0, 1), FD_ONLY) / 2 == pytest.approx(4.0, rel=1e-8)
    q = polynomial_field("x**2 - y**2")
    assert sublaplacian(q, Point(0.4, -1.0, 2.0), FD_ONLY) == pytest.approx(0.0, abs=1e-8)


def test_paneitz_constant_and_sign():
    p0 = Point(0, 0, 1)
    assert paneitz_prime(L, p0) == pytest.approx(16.0, rel=1e-12)
    assert paneitz_prime(L, p0, FD_ONLY) == pytest.approx(16.0, rel=1e-5)
    assert paneitz_prime(L, Point(1, 0, 0), FD_ONLY) < 0
    assert paneitz_prime(polynomial_field("x**2-y**2"), Point(1, 2, 3), FD_ONLY) == pytest.approx(0.0, abs=1e-6)


def test_pluriharmonic_examples():
    for expr in ("x", "y", "t"):
        assert pluriharmonic_residual(polynomial_field(expr), Point(0.5, 1, -2), FD_ONLY) == pytest.approx(0.0, abs=1e-6)
    assert pluriharmonic_residual(L, Point(1, 0, 2), FD_ONLY, normalized=True) == pytest.approx(0.0, abs=1e-6)
    # control: Delta_b^2 t^2 = 32 |z|^0 ... exactly 2 * C_T + ... ; check against the symbolic value
    f = polynomial_field("t**2")
    exact = pluriharmonic_residual(f, Point(0.3, 0.4, 0.5))
    assert exact == pytest.approx(64.0)
    assert abs(pluriharmonic_residual(f, Point(0.3, 0.4, 0.5), FD_ONLY)) > 0.1


def test_residual_vanishes_only_with_calibrated_constant():
    p = Point(0.8, -0.3, 0.6)
    quartic = sum(frame_word(L, w, p) for w in ("XXXX", "XXYY", "YYXX", "YYYY"))
    tt = frame_word(L, "TT", p)
    assert quartic + C_T * tt == pytest.approx(0.0, abs=1e-12)
    assert abs(quartic + 1.0 * tt) > 1e-2


def test_webster_examples():
    u = make_closed_form(Kind.LinearT, c2=1.0)
    p = Point(1, 1, 0)
    assert webster_scalar(u, p, FD_ONLY) == pytest.approx(-8.0, rel=1e-9)
    assert webster_scalar(constant_field(0.7), p) == 0.0


def test_webster_boundary_case():
    # u = log(x) has Delta_b u = -1/x^2 = -|grad_b u|^2, so the curvature vanishes
    u = polynomial_field("log(x)")
    assert webster_scalar(u, Point(1.5, 0.2, 0.3), FD_ONLY) == pytest.approx(0.0, abs=1e-8)


def test_ladder_analytic_vs_closed_forms():
    pts = sample_cloud(50, 7, (0.3, 10.0))
    S = make_closed_form(Kind.SublapLogGauge)
    a = sublaplacian(L, pts)
    b = sublaplacian(S, pts)
    np.testing.assert_allclose(a, sublap_log_gauge(pts), rtol=1e-10)
    np.testing.assert_allclose(b, 8 * szego_numerator(pts), rtol=1e-10)
    np.testing.assert_allclose(sublaplacian(L, pts, FD_ONLY), a, rtol=1e-6)


def test_gradient_bound():
    pts = sample_cloud(200, 3, (0.1, 20.0))
    g = np.sqrt(horizontal_gradient_sq(L, pts))
    from heisenberg_iso.group import gauge

    assert np.all(g <= 1 / gauge(pts) * (1 + 1e-12))


@settings(max_examples=20)
@given(st.integers(0, 2**32 - 1))
def test_commutator_on_polynomials(seed):
    rng = np.random.default_rng(seed)
    terms = [f"({rng.normal():.5f})*x**{a}*y**{b}*t**{c}" for a, b, c in rng.integers(0, 3, size=(4, 3))]
    f = polynomial_field("+".join(terms))
    p = sample_cloud(3, seed, (0.5, 3.0))
    lhs = commutator_XY(f, p, FD_ONLY)
    rhs = -4 * frame_word(f, "T", p)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-8, atol=1e-8 * np.max(np.abs(rhs)) + 1e-10)
    np.testing.assert_allclose(commutator_XY(f, p), rhs, rtol=1e-12, atol=1e-12)


@settings(max_examples=15)
@given(points, points)
def test_left_invariance_of_fd(g, p):
    f = polynomial_field("x**2*t - y**3 + x*y")
    g, p = np.array(g), np.array(p)
    fg = f.translated(g)
    for word in ("X", "Y", "XY", "T"):
        a = frame_word(fg, word, p, FD_ONLY)
        b = frame_word(f, word, mul(g, p), FD_ONLY)
        assert a == pytest.approx(b, rel=1e-8, abs=1e-8)


@pytest.mark.parametrize("lam", [0.5, 2.0, 3.0])
def test_dilation_covariance(lam):
    p = np.array([0.7, -0.2, 0.9])
    fl = L.dilated(lam)
    dp = dilate(Dilation(lam), p)
    assert sublaplacian(fd_only(fl), p) == pytest.approx(lam**2 * sublaplacian(L, dp), rel=1e-6)
    assert paneitz_prime(fd_only(fl), p) == pytest.approx(lam**4 * paneitz_prime(L, dp), rel=1e-5)


def test_singular_stencil_rejected():
    f = ScalarField(lambda q: 1.0 / np.linalg.norm(q, axis=-1), None, [Singularity(IDENTITY, 1.0)])
    with pytest.raises(SingularPoint):
        frame_word(f, "X", Point(0.0, 0.0, 0.0), FDScheme(step=0.1, richardson=0))


def test_richardson_guard():
    f = ScalarField(lambda q: np.sin(40 * q[..., 0]), None)
    with pytest.raises(StepTooCoarse):
        frame_word(f, "XX", Point(0.1, 0, 0), FDScheme(step=0.2, order=2, richardson=1, tol=1e-6))


def test_scheme_validation():
    with pytest.raises(ValueError):
        FDScheme(step=-1)
    with pytest.raises(ValueError):
        FDScheme(order=3)


def test_central_weights_second_derivative():
    offs, w = central_weights(2, 2)
    assert offs == (-1.0, 0.0, 1.0)
    np.testing.assert_allclose(w, [1, -2, 1])
