import math

import numpy as np
import pytest

from blab import circle
from blab.dynamics import PhasePoint, iterate, power_batch
from blab.errors import DegenerateTriangle
from blab.orbits import (classify, dt3_defect, extended_length, extended_length_batch,
                         fermat_defect, find_period3, identity_diagnostics, orbit_from_phase,
                         perimeter, perimeter_gradient, sample_p3, sample_p3_points,
                         wojtkowski_residual)

from conftest import THIRD

ROOT3 = math.sqrt(3)


@pytest.fixture(scope="module")
def circle_orbits(unit_circle):
    return find_period3(unit_circle, 64, 0)


@pytest.fixture(scope="module")
def ellipse_orbits(near_circle_ellipse):
    return find_period3(near_circle_ellipse, 256, 0)


@pytest.fixture(scope="module")
def trefoil_orbits(trefoil):
    return find_period3(trefoil, 256, 0)


# perimeter ---------------------------------------------------------------------------

def test_perimeter_examples(unit_circle, ellipse21):
    assert perimeter(unit_circle, 0, 2 * math.pi / 3, 4 * math.pi / 3) == pytest.approx(3 * ROOT3, abs=1e-12)
    assert perimeter(unit_circle, 0, math.pi, 0) == pytest.approx(4.0, abs=1e-12)
    l = ellipse21.length
    # regression pin from direct evaluation of the three vertex positions
    x = ellipse21.position(np.array([0, l / 3, 2 * l / 3]))
    direct = sum(np.linalg.norm(x[i] - x[(i + 1) % 3]) for i in range(3))
    assert perimeter(ellipse21, 0, l / 3, 2 * l / 3) == pytest.approx(direct, abs=1e-13)
    assert perimeter(ellipse21, 0, l / 3, 2 * l / 3) == pytest.approx(7.727342805590949, abs=1e-12)


def test_perimeter_gradient_vanishes_on_equilateral(unit_circle):
    g = perimeter_gradient(unit_circle, 0, 2 * math.pi / 3, 4 * math.pi / 3)
    np.testing.assert_allclose(g, 0.0, atol=1e-14)


@pytest.mark.parametrize("triple", [(0.0, 2 * math.pi / 3 + 0.01, 4 * math.pi / 3), (0.3, 2.0, 4.1), (1.0, 1.5, 5.0)])
def test_perimeter_gradient_matches_finite_differences(unit_circle, ellipse21, trefoil, triple):
    for curve in (unit_circle, ellipse21, trefoil):
        g = perimeter_gradient(curve, *triple)
        h = 1e-6
        fd = []
        for k in range(3):
            up, dn = list(triple), list(triple)
            up[k] += h
            dn[k] -= h
            fd.append((perimeter(curve, *up) - perimeter(curve, *dn)) / (2 * h))
        np.testing.assert_allclose(g, fd, atol=1e-6)
    assert np.linalg.norm(perimeter_gradient(unit_circle, 0.0, 2 * math.pi / 3 + 0.01, 4 * math.pi / 3)) > 1e-3


def test_perimeter_gradient_rejects_coinciding_vertices(unit_circle):
    with pytest.raises(DegenerateTriangle):
        perimeter_gradient(unit_circle, 1.0, 1.0, 3.0)
    with pytest.raises(DegenerateTriangle):
        perimeter_gradient(unit_circle, 0.0, 3.0, 2 * math.pi)


def test_classify():
    assert classify(-np.eye(3)) == "maximum"
    assert classify(np.diag([-1.0, 2.0, 3.0])) == "saddle"
    assert classify(np.eye(3)) == "other"
    assert classify(np.diag([-1.0, -1.0, 1e-10])) == "other"


# variational search --------------------------------------------------------------------

def test_find_period3_circle(unit_circle, circle_orbits):
    assert len(circle_orbits) > 1
    for o in circle_orbits:
        assert o.perimeter == pytest.approx(3 * ROOT3, abs=1e-8)
        np.testing.assert_allclose(o.theta, THIRD, atol=1e-8)
        assert o.gradient_norm < 1e-9 * unit_circle.length
    t0 = [o.t[0] for o in circle_orbits]
    assert max(t0) - min(t0) > 1.0
    assert t0 == sorted(t0)


def test_find_period3_is_deterministic(unit_circle, circle_orbits):
    assert find_period3(unit_circle, 64, 0) == circle_orbits
    assert find_period3(unit_circle, 64, 0, threads=4) == circle_orbits
    assert find_period3(unit_circle, 64, 1) != circle_orbits


def test_find_period3_ellipse_family(near_circle_ellipse, ellipse_orbits):
    t0 = np.array([o.t[0] for o in ellipse_orbits])
    theta0 = np.array([o.theta[0] for o in ellipse_orbits])
    assert len(np.unique(np.round(t0, 6))) >= 8
    assert theta0.max() - theta0.min() > 0.01
    assert max(o.gradient_norm for o in ellipse_orbits) < 1e-9 * near_circle_ellipse.length
    # one Poncelet family: every orbit has the same perimeter
    per = [o.perimeter for o in ellipse_orbits]
    assert max(per) - min(per) < 1e-9


def test_find_period3_trefoil_isolated(trefoil, trefoil_orbits):
    assert 2 <= len(trefoil_orbits) < 20
    doubled = find_period3(trefoil, 512, 0)
    assert len(doubled) == len(trefoil_orbits)
    for a, b in zip(trefoil_orbits, doubled):
        np.testing.assert_allclose(a.t, b.t, atol=1e-6 * trefoil.length)
    kinds = {o.classification for o in trefoil_orbits}
    assert "maximum" in kinds and "saddle" in kinds


def test_orbit_triple_invariants(test_curves, circle_orbits, ellipse_orbits, trefoil_orbits,
                                 unit_circle, near_circle_ellipse, trefoil):
    for curve, orbits in ((unit_circle, circle_orbits), (near_circle_ellipse, ellipse_orbits[:20]),
                          (trefoil, trefoil_orbits)):
        l = curve.length
        for o in orbits:
            t = np.array(o.t)
            gaps = np.abs(curve.wrap_difference(t - np.roll(t, 1)))
            assert gaps.min() >= 1e-4 * l
            assert all(0 < th < math.pi for th in o.theta)
            q = iterate(curve, o.phase(0), 3)[-1]
            assert abs(curve.wrap_difference(q.t - o.t[0])) < 1e-7
            assert abs(q.theta - o.theta[0]) < 1e-7
            # cyclic consistency
            rotations = [perimeter(curve, *np.roll(t, k)) for k in range(3)]
            assert max(rotations) - min(rotations) < 1e-12
            ext = [extended_length(curve, o.phase(k)) for k in range(3)]
            assert max(abs(e - o.perimeter) for e in ext) < 1e-10


def test_empty_orbit_list_is_legal(unit_circle):
    assert isinstance(find_period3(unit_circle, 1, 3), list)
    with pytest.raises(ValueError):
        find_period3(unit_circle, 0)


# extended length -------------------------------------------------------------------------

def test_extended_length_examples(unit_circle):
    assert extended_length(unit_circle, PhasePoint(0.0, THIRD)) == pytest.approx(3 * ROOT3, abs=1e-12)
    assert extended_length(unit_circle, PhasePoint(0.0, math.pi / 2)) == pytest.approx(4.0, abs=1e-12)
    theta = THIRD + 0.05
    x0 = np.array([1.0, 0.0])
    x1 = unit_circle.position(2 * theta)
    x2 = unit_circle.position(4 * theta)
    direct = np.linalg.norm(x1 - x0) + np.linalg.norm(x2 - x1) + np.linalg.norm(x0 - x2)
    assert extended_length(unit_circle, PhasePoint(0.0, theta)) == pytest.approx(direct, abs=1e-12)


def test_extended_length_is_c1_near_orbits(circle_orbits, ellipse_orbits, trefoil_orbits,
                                           unit_circle, near_circle_ellipse, trefoil):
    rng = np.random.default_rng(11)
    for curve, orbits in ((unit_circle, circle_orbits[:1]), (near_circle_ellipse, ellipse_orbits[:1]),
                          (trefoil, trefoil_orbits)):
        for o in orbits:
            base = np.array([o.t[0], o.theta[0]]) + rng.uniform(-1e-3, 1e-3, (100, 2))
            grads = []
            for h in (1e-5, 1e-6):
                t = np.concatenate([base[:, 0] + h, base[:, 0] - h, base[:, 0], base[:, 0]])
                th = np.concatenate([base[:, 1], base[:, 1], base[:, 1] + h, base[:, 1] - h])
                v, ok = extended_length_batch(curve, t, th)
                assert ok.all()
                v = v.reshape(4, -1)
                grads.append(np.stack([v[0] - v[1], v[2] - v[3]], axis=1) / (2 * h))
            diff = np.linalg.norm(grads[0] - grads[1], axis=1)
            size = np.maximum(np.linalg.norm(grads[1], axis=1), 1e-3)
            assert np.all(diff <= 1e-3 * size)


def test_fermat_defect(unit_circle, circle_orbits, near_circle_ellipse, ellipse_orbits):
    assert abs(fermat_defect(unit_circle, circle_orbits[0])) < 1e-5
    assert max(abs(fermat_defect(near_circle_ellipse, o)) for o in ellipse_orbits[:10]) < 1e-5
    assert abs(fermat_defect(unit_circle, PhasePoint(0.0, THIRD + 0.1))) > 1e-2


# identity diagnostics ------------------------------------------------------------------------

def test_wojtkowski_residual_on_circles(unit_circle, circle_orbits):
    for o in circle_orbits:
        assert wojtkowski_residual(unit_circle, o) == pytest.approx(9 * ROOT3 / 4, abs=1e-8)
    big = circle(2.0)
    o = orbit_from_phase(big, PhasePoint(0.0, THIRD))
    assert wojtkowski_residual(big, o) == pytest.approx(9 * ROOT3 / 4, abs=1e-8)


def test_dt3_defect_examples(unit_circle):
    assert dt3_defect(unit_circle, PhasePoint(0.0, THIRD)) == pytest.approx(6.0, abs=1e-5)
    assert dt3_defect(circle(2.0), PhasePoint(0.0, THIRD)) == pytest.approx(12.0, abs=1e-5)


def test_dt3_defect_of_identity_test_double(unit_circle):
    def rigid_identity(curve, p, order):
        return np.eye(2)
    assert dt3_defect(unit_circle, PhasePoint(0.0, THIRD), differential_fn=rigid_identity) == 0.0


def test_orbit_from_phase_visit_order(unit_circle):
    o = orbit_from_phase(unit_circle, PhasePoint(1.0, THIRD))
    np.testing.assert_allclose(o.t, [1.0, 1.0 + 2 * THIRD, 1.0 + 4 * THIRD], atol=1e-12)
    assert o.perimeter == pytest.approx(3 * ROOT3)


# T^3 scan ---------------------------------------------------------------------------------------

def test_sample_p3_circle_lines(unit_circle):
    cloud = sample_p3(unit_circle, 128, 128, 1e-9)
    assert len(cloud) > 100
    theta = cloud.points[:, 1]
    off = np.minimum(np.abs(theta - THIRD), np.abs(theta - 2 * THIRD))
    assert off.max() < 1e-8
    assert np.any(theta < math.pi / 2) and np.any(theta > math.pi / 2)
    assert cloud.points[:, 0].min() >= 0 and cloud.points[:, 0].max() < 2 * math.pi


def test_sample_p3_points_close_up(test_curves):
    tol = 1e-9
    for curve in test_curves.values():
        t, th = sample_p3_points(curve, 32, 16, tol)
        t3, th3, ok = power_batch(curve, t, th, 3)
        assert ok.all()
        assert np.abs(curve.wrap_difference(t3 - t)).max() < 10 * tol
        assert np.abs(th3 - th).max() < 10 * tol


def test_sample_p3_trefoil_is_finite_and_stable(trefoil):
    a = sample_p3_points(trefoil, 32, 32)
    b = sample_p3_points(trefoil, 64, 64)
    assert len(a[0]) == len(b[0]) == 48  # 8 orbits x 3 phases x 2 orientations
    np.testing.assert_allclose(a[0], b[0], atol=1e-7)


def test_sample_p3_ellipse_traces_two_closed_curves(near_circle_ellipse):
    cloud = sample_p3(near_circle_ellipse, 256, 16)
    x, theta = cloud.points.T
    for branch in (theta < math.pi / 2, theta > math.pi / 2):
        # each branch covers the whole circle of positions without gaps
        bins = np.unique(np.floor(x[branch] / (2 * math.pi) * 64))
        assert len(bins) == 64
    # time reversal maps one branch onto the other
    lower = np.sort(theta[theta < math.pi / 2])
    assert lower.max() - lower.min() > 0.01


def test_sample_p3_validates_arguments(unit_circle):
    with pytest.raises(ValueError):
        sample_p3(unit_circle, 4, 16)
    with pytest.raises(ValueError):
        sample_p3(unit_circle, 16, 16, tol=0.0)


def test_sample_p3_thread_independent(trefoil):
    a = sample_p3_points(trefoil, 32, 40, threads=1)
    b = sample_p3_points(trefoil, 32, 40, threads=3)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_conditional_identity_on_sampled_points(test_curves):
    for curve in test_curves.values():
        t, th = sample_p3_points(curve, 32, 16)
        defect, residual, ok = identity_diagnostics(curve, t, th)
        flat = ok & (defect < 1e-6)
        assert np.all(np.abs(residual[flat]) < 1e-4)
