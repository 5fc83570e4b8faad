import math

import numpy as np
import pytest
from scipy import integrate

from heisenberg_iso.calculus import constant_field
from heisenberg_iso.errors import DegeneratePerimeter, NotApplicable
from heisenberg_iso.group import IDENTITY, Dilation, Point, dilate
from heisenberg_iso.isoperimetry import (
    Box,
    GaugeAnnulus,
    GaugeBall,
    HalfSpaceClip,
    example46_sweep,
    half_space_pairs,
    iso_quotient,
    relative_iso_check,
    standard_domains,
    weighted_perimeter,
    weighted_volume,
)
from heisenberg_iso.isoperimetry import _fraction_inside
from heisenberg_iso.quadrature import UNIT_BALL_VOLUME, QuadratureSpec, unit_sphere_area
from heisenberg_iso.weights import power_weight

QUAD = QuadratureSpec(rel_tol=1e-8)
AREA = unit_sphere_area()


def test_box_volume_and_horizontal_perimeter():
    box = Box(Point(1.0, 1.0, 1.0), (1.0, 2.0, 0.5))
    assert weighted_volume(box) == pytest.approx(1.0)
    t_face, _ = integrate.dblquad(lambda y, x: 2 * math.hypot(x, y), 1, 2, 1, 3, epsabs=1e-12)
    expected = 2 * (2.0 * 0.5) + 2 * (1.0 * 0.5) + 2 * t_face
    assert weighted_perimeter(box, None, QUAD) == pytest.approx(expected, rel=1e-9)
    assert box.volume_integral(lambda p: p[:, 0], QUAD) == pytest.approx(1.5, rel=1e-12)


def test_box_dilation():
    box = Box(Point(1.0, -1.0, 0.5), (1.0, 2.0, 0.5))
    big = box.dilated(2.0)
    assert big.volume() == pytest.approx(16 * box.volume())
    assert weighted_perimeter(big, None, QUAD) == pytest.approx(8 * weighted_perimeter(box, None, QUAD), rel=1e-8)


def test_plane_pieces_against_oracles():
    ball = GaugeBall(IDENTITY, 1.0)
    tplane = HalfSpaceClip("t", 0.0, ball)
    assert tplane.plane_integral(lambda p: np.ones(p.shape[:-1]), ball, QUAD) == pytest.approx(4 * math.pi / 3, rel=1e-7)
    xplane = HalfSpaceClip("x", 0.0, ball)
    oracle, _ = integrate.quad(lambda y: 2 * math.sqrt(1 - y**4), -1, 1, epsabs=1e-12)
    assert xplane.plane_integral(lambda p: np.ones(p.shape[:-1]), ball, QUAD) == pytest.approx(oracle, rel=1e-6)


def test_clip_through_centre_halves_the_ball():
    for omega, ball in half_space_pairs()[::5]:
        assert _fraction_inside(omega, ball, QuadratureSpec(rel_tol=1e-7)) == pytest.approx(0.5, abs=1e-6)
    clip = HalfSpaceClip("t", 0.0, GaugeBall(IDENTITY, 1.0))
    assert clip.volume(QUAD) == pytest.approx(UNIT_BALL_VOLUME / 2, rel=1e-7)
    assert clip.volume(QUAD) + clip.complement().volume(QUAD) == pytest.approx(UNIT_BALL_VOLUME, rel=1e-7)


def test_clip_dilation_maps_plane_to_plane():
    clip = HalfSpaceClip((1.0, 0.0, 1.0), 0.2, GaugeBall(IDENTITY, 1.0))
    big = clip.dilated(3.0)
    pts = np.random.default_rng(0).normal(size=(200, 3))
    np.testing.assert_array_equal(clip.contains(pts), big.contains(dilate(Dilation(3.0), pts)))
    assert big.volume(QUAD) == pytest.approx(81 * clip.volume(QUAD), rel=1e-6)


def test_power_ball_quotient_closed_form():
    for kappa in (0.0, 1.0, 2.0, 3.0):
        row = iso_quotient(GaugeBall(IDENTITY, 2.0), power_weight(kappa), QUAD)
        expected = 2 * math.pi**2 / ((4 - kappa) * AREA ** (4 / 3))
        assert row.quotient == pytest.approx(expected, rel=1e-7)
        assert row.recomputed_quotient() == pytest.approx(row.quotient, rel=1e-14)
        assert "horizontal" in row.as_dict()["perimeter_convention"]


def test_quotient_is_dilation_invariant_off_centre():
    w = power_weight(2)
    c = Point(2.0, 0.0, 0.0)
    a = iso_quotient(GaugeBall(c, 1.0), w, QuadratureSpec(rel_tol=1e-7)).quotient
    b = iso_quotient(GaugeBall(dilate(Dilation(3.0), c), 3.0), w, QuadratureSpec(rel_tol=1e-7)).quotient
    assert a == pytest.approx(b, rel=1e-6)


def test_annulus_perimeter_counts_both_spheres():
    ann = GaugeAnnulus(1.0, 2.0)
    assert weighted_perimeter(ann, None, QUAD) == pytest.approx(AREA * 9, rel=1e-9)
    assert weighted_volume(ann) == pytest.approx(UNIT_BALL_VOLUME * 15)
    assert weighted_volume(GaugeAnnulus(1.0, 1.0), power_weight(1)) == 0.0


def test_degenerate_perimeter():
    with pytest.raises(DegeneratePerimeter):
        iso_quotient(GaugeBall(IDENTITY, 1.0), constant_field(0.0))


def test_annulus_sweep_exact_columns():
    radii = [2.0, 4.0, 8.0, 16.0]
    sw = example46_sweep(radii, quad=QuadratureSpec(rel_tol=1e-8))
    np.testing.assert_allclose(sw.volumes, 2 * math.pi**2 * np.log(radii), rtol=1e-6)
    np.testing.assert_allclose(sw.perimeters, 2 * AREA, rtol=1e-9)
    assert sw.log_slope == pytest.approx(2 * math.pi**2, rel=1e-6)
    assert np.all(np.diff(sw.quotients) > 0)
    with pytest.raises(ValueError):
        example46_sweep([4.0, 2.0])
    with pytest.raises(ValueError):
        example46_sweep([0.5, 2.0])


def test_standard_domains_span_scales():
    doms = standard_domains()
    assert len(doms) >= 10
    assert {type(d).__name__ for d in doms} == {"GaugeBall", "GaugeAnnulus", "Box"}


def test_relative_check_hypothesis():
    ball = GaugeBall(IDENTITY, 1.0)
    off = HalfSpaceClip("x", 0.5, GaugeBall(IDENTITY, 4.0))
    with pytest.raises(NotApplicable):
        relative_iso_check(off, ball, QuadratureSpec(rel_tol=1e-6))
    through = HalfSpaceClip("t", 0.0, GaugeBall(IDENTITY, 4.0))
    lhs, rhs = relative_iso_check(through, ball, QuadratureSpec(rel_tol=1e-7))
    assert lhs == pytest.approx(UNIT_BALL_VOLUME**0.75)
    # the t = 0 plane inside B(0, 2) has horizontal area 4 pi 2^3 / 3
    assert rhs == pytest.approx(32 * math.pi / 3, rel=1e-6)


def test_fraction_inside_for_overlapping_balls_uses_monte_carlo():
    q = QuadratureSpec(method="MonteCarlo", resolution=20, seed=1)
    f = _fraction_inside(GaugeBall(Point(1.0, 0.0, 0.0), 1.0), GaugeBall(IDENTITY, 1.0), q)
    assert 0.05 < f < 0.95
    assert _fraction_inside(GaugeBall(IDENTITY, 5.0), GaugeBall(IDENTITY, 1.0), q) == 1.0
    assert _fraction_inside(GaugeBall(Point(0, 0, 100.0), 1.0), GaugeBall(IDENTITY, 1.0), q) == 0.0


@pytest.mark.parametrize("kappa", [0.0, 4.0])
@pytest.mark.parametrize("lam", [2.0, 5.0])
def test_quotient_dilation_invariance_kappa_0_and_4(kappa, lam):
    # the ball stays away from the identity, so rho^-4 is integrable on it
    c = Point(2.0, 0.0, 0.0)
    q = QuadratureSpec(rel_tol=1e-6)
    a = iso_quotient(GaugeBall(c, 1.0), power_weight(kappa), q).quotient
    b = iso_quotient(GaugeBall(dilate(Dilation(lam), c), lam), power_weight(kappa), q).quotient
    assert a == pytest.approx(b, rel=1e-3)
