import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import ellipe

from blab import boundary
from blab.boundary import build_curve, circle, ellipse, fourier
from blab.errors import NonPositiveRadius, NonSmooth, SelfIntersecting


def test_circle_length(unit_circle):
    assert unit_circle.length == pytest.approx(2 * math.pi, rel=1e-13)


def test_degenerate_ellipse_is_circle():
    assert ellipse(1.0, 1.0).length == pytest.approx(2 * math.pi, rel=1e-13)


def test_ellipse_length_against_elliptic_integral(ellipse21):
    exact = 4 * 2.0 * ellipe(1 - 0.25)
    assert ellipse21.length == pytest.approx(exact, rel=1e-12)
    assert ellipse21.length == pytest.approx(9.688448220, abs=1e-9)


@given(st.floats(0.2, 5.0), st.floats(0.2, 5.0))
def test_ellipse_length_against_quadrature(a, b):
    direct, _ = quad(lambda p: math.hypot(a * math.sin(p), b * math.cos(p)), 0, 2 * math.pi,
                     epsabs=0, epsrel=1e-13, limit=200)
    assert ellipse(a, b).length == pytest.approx(direct, rel=1e-10)


def test_fourier_length_against_quadrature(trefoil):
    def speed(p):
        r = 1 + 0.1 * math.cos(3 * p)
        return math.hypot(r, -0.3 * math.sin(3 * p))
    direct, _ = quad(speed, 0, 2 * math.pi, epsabs=0, epsrel=1e-13, limit=200)
    assert trefoil.length == pytest.approx(direct, rel=1e-10)


@pytest.mark.parametrize("t, expected", [(0.0, (1.0, 0.0)), (math.pi / 2, (0.0, 1.0))])
def test_circle_position(unit_circle, t, expected):
    np.testing.assert_allclose(unit_circle.position(t), expected, atol=1e-14)


def test_ellipse_start_point(ellipse21):
    np.testing.assert_allclose(ellipse21.position(0.0), (2.0, 0.0), atol=1e-14)


def test_curvature_examples(unit_circle, ellipse21):
    assert unit_circle.curvature(1.234) == pytest.approx(1.0, rel=1e-12)
    assert circle(2.0).curvature(0.3) == pytest.approx(0.5, rel=1e-12)
    assert ellipse21.curvature(0.0) == pytest.approx(2.0, rel=1e-12)
    assert boundary.curvature(ellipse21, 0.0) == pytest.approx(2.0, rel=1e-12)


def test_tangent_angle_examples(unit_circle, ellipse21):
    assert unit_circle.tangent_angle(0.0) == pytest.approx(math.pi / 2)
    assert unit_circle.tangent_angle(math.pi) == pytest.approx(3 * math.pi / 2)
    assert ellipse21.tangent_angle(0.0) == pytest.approx(math.pi / 2)


def test_tangent_angle_is_a_continuous_lift(trefoil):
    t = np.linspace(0, trefoil.length, 2001)
    ang = trefoil.tangent_angle(t)
    assert np.max(np.abs(np.diff(ang))) < 0.1
    assert ang[-1] - ang[0] == pytest.approx(2 * math.pi, abs=1e-9)


def test_closure_and_periodicity(test_curves):
    for curve in test_curves.values():
        l = curve.length
        t = np.linspace(0, l, 1024, endpoint=False)
        assert np.linalg.norm(curve.position(0.0) - curve.position(l)) < 1e-10 * l
        diff = np.linalg.norm(curve.position(t + l) - curve.position(t), axis=1)
        assert diff.max() < 1e-10 * l


def test_unit_speed(test_curves):
    for curve in test_curves.values():
        t = np.linspace(0, curve.length, 1024, endpoint=False)
        h = 1e-5
        speed = np.linalg.norm(curve.position(t + h) - curve.position(t - h), axis=1) / (2 * h)
        assert np.abs(speed - 1).max() < 1e-8


def test_tangent_is_derivative_of_position(trefoil):
    t = np.linspace(0, trefoil.length, 257)
    h = 1e-6
    fd = (trefoil.position(t + h) - trefoil.position(t - h)) / (2 * h)
    np.testing.assert_allclose(trefoil.tangent(t), fd, atol=1e-8)


def test_curvature_integral_is_two_pi(test_curves):
    for curve in test_curves.values():
        t = np.linspace(0, curve.length, 4096, endpoint=False)
        total = curve.curvature(t).sum() * curve.length / 4096
        assert total == pytest.approx(2 * math.pi, abs=1e-6)


def test_curvature_matches_second_differences(test_curves):
    for curve in test_curves.values():
        t = np.linspace(0, curve.length, 200, endpoint=False)
        h = 1e-4 * curve.length
        acc = (curve.position(t + h) - 2 * curve.position(t) + curve.position(t - h)) / h**2
        tan = curve.tangent(t)
        signed = tan[:, 0] * acc[:, 1] - tan[:, 1] * acc[:, 0]
        k = curve.curvature(t)
        # the trefoil's curvature vanishes at its three troughs, so the
        # relative error is measured against max(|k|, mean curvature)
        scale = np.maximum(np.abs(k), 2 * math.pi / curve.length)
        assert np.max(np.abs(signed - k) / scale) < 1e-4


def test_inverse_arc_length_round_trip(trefoil):
    t = np.linspace(-5, 3 * trefoil.length, 5001)
    assert np.abs(trefoil.t_of_phi(trefoil.phi_of_t(t)) - t).max() < 1e-12


@given(st.floats(0.2, 3.0), st.lists(st.floats(-0.004, 0.004), min_size=1, max_size=6),
       st.lists(st.floats(-0.004, 0.004), max_size=6))
def test_small_fourier_perturbations_are_convex(r0, cos, sin):
    curve = fourier(r0, [c * r0 for c in cos], [s * r0 for s in sin])
    t = np.linspace(0, curve.length, 512, endpoint=False)
    assert np.all(curve.curvature(t) > 0)
    assert curve.length > 0


def test_descriptor_json_schema():
    curve = build_curve({"kind": "fourier", "r0": 1.0, "cos": [0, 0, 0.1], "sin": []})
    assert curve.descriptor == {"kind": "fourier", "r0": 1.0, "cos": [0.0, 0.0, 0.1], "sin": []}
    assert build_curve({"kind": "ellipse", "a": 2.0, "b": 1.0}).length == pytest.approx(9.688448220547677)


@pytest.mark.parametrize("descriptor", [
    {"kind": "circle", "R": 0.0},
    {"kind": "circle", "R": -1.0},
    {"kind": "ellipse", "a": 2.0, "b": 0.0},
    {"kind": "fourier", "r0": 1.0, "cos": [1.5], "sin": []},
])
def test_non_positive_radius(descriptor):
    with pytest.raises(NonPositiveRadius):
        build_curve(descriptor)


def test_rejects_too_many_harmonics():
    with pytest.raises(ValueError):
        fourier(1.0, [0.0] * 33)


def test_rejects_unknown_kind():
    with pytest.raises(ValueError):
        build_curve({"kind": "square", "side": 1.0})


def test_nonsmooth_rejected():
    # a high harmonic makes the curvature oscillate far beyond the bound
    with pytest.raises(NonSmooth):
        build_curve({"kind": "fourier", "r0": 1.0, "cos": [0.0] * 19 + [0.049], "sin": []},
                    curvature_bound=5.0)


def test_near_touching_lobes_rejected():
    # r stays positive but sixteen deep spikes bring distant arcs together
    with pytest.raises(SelfIntersecting):
        build_curve({"kind": "fourier", "r0": 1.0, "cos": [0.0] * 15 + [0.99], "sin": []},
                    curvature_bound=1e12)


def test_nonconvex_boundaries_are_allowed():
    curve = fourier(1.0, [0.0, 0.0, 0.0, 0.0, 0.1])
    t = np.linspace(0, curve.length, 1024, endpoint=False)
    assert curve.curvature(t).min() < 0
