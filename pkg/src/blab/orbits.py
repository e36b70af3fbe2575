"""Period-3 orbits: variational search, extended length, identity diagnostics.

Two independent routes to three-periodic orbits live here.  :func:`find_period3`
looks for critical points of the triangle perimeter in the three vertex
parameters; :func:`sample_p3` scans phase space for fixed points of ``T^3``.
They share nothing beyond the boundary geometry and the billiard map.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .boundary import TWO_PI, BoundaryCurve
from .dynamics import (OK, PhasePoint, differential, differential_batch, power_batch,
                       power_jacobian_batch, shoot_batch)
from .errors import DegenerateTriangle, GrazingIntersection
from .fractal import PointCloud
from .parallel import map_chunks

GRADIENT_TOL = 1e-9        # times the boundary length
DISTINCT_TOL = 1e-4        # times the boundary length
DEDUP_TOL = 1e-6           # times the boundary length
EIGEN_TOL = 1e-8
HESSIAN_STEP = 1e-6        # times the boundary length
FERMAT_STEP = 1e-6


@dataclass(frozen=True)
class OrbitTriple:
    """A three-periodic orbit given by its vertices ``t`` (visit order) and outgoing angles ``theta``."""

    t: tuple
    theta: tuple
    perimeter: float
    classification: str
    gradient_norm: float

    def phase(self, i: int = 0) -> PhasePoint:
        return PhasePoint(self.t[i], self.theta[i])


# perimeter and its derivatives ----------------------------------------------

def _vertices(curve, T):
    phi = curve.phi_of_t(T)
    x, dx, _ = curve.derivatives_native(phi)
    tan = dx / np.hypot(dx[..., 0], dx[..., 1])[..., None]
    return x, tan


def _perimeter_batch(curve, T):
    x, _ = _vertices(curve, T)
    e = np.roll(x, -1, axis=-2) - x
    return np.hypot(e[..., 0], e[..., 1]).sum(axis=-1)


def _gradient_batch(curve, T):
    x, tan = _vertices(curve, T)
    back = x - np.roll(x, 1, axis=-2)
    fwd = x - np.roll(x, -1, axis=-2)
    nb = np.hypot(back[..., 0], back[..., 1])
    nf = np.hypot(fwd[..., 0], fwd[..., 1])
    with np.errstate(divide="ignore", invalid="ignore"):
        return ((tan * back).sum(-1) / nb) + ((tan * fwd).sum(-1) / nf)


def _hessian_batch(curve, T):
    h = HESSIAN_STEP * curve.length
    H = np.empty(T.shape[:-1] + (3, 3))
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        H[..., :, k] = (_gradient_batch(curve, T + e) - _gradient_batch(curve, T - e)) / (2 * h)
    return 0.5 * (H + np.swapaxes(H, -1, -2))


def _min_gap(curve, T):
    d = np.abs(curve.wrap_difference(T - np.roll(T, 1, axis=-1)))
    return d.min(axis=-1)


def perimeter(curve: BoundaryCurve, t0, t1, t2) -> float:
    """Length of the closed polygon through the three boundary points."""
    return float(_perimeter_batch(curve, np.array([t0, t1, t2], dtype=float)))


def perimeter_gradient(curve: BoundaryCurve, t0, t1, t2) -> np.ndarray:
    """Partial derivatives of :func:`perimeter` in the arc-length parameters.

    At each vertex this is the sum of the cosines of the angles the two
    adjacent sides make with the tangent, so it vanishes exactly when the
    reflection law holds at all three vertices.
    """
    T = np.array([t0, t1, t2], dtype=float)
    if _min_gap(curve, T) < 1e-9 * curve.length:
        raise DegenerateTriangle(f"coinciding vertices in {T.tolist()}")
    return _gradient_batch(curve, T)


def classify(hessian: np.ndarray) -> str:
    ev = np.linalg.eigvalsh(hessian)
    if np.any(np.abs(ev) <= EIGEN_TOL):
        return "other"
    if np.all(ev < 0):
        return "maximum"
    if np.any(ev < 0) and np.any(ev > 0):
        return "saddle"
    return "other"


def _angles(curve, T):
    x, tan = _vertices(curve, T)
    v = np.roll(x, -1, axis=-2) - x
    cross = tan[..., 0] * v[..., 1] - tan[..., 1] * v[..., 0]
    return np.arctan2(cross, (tan * v).sum(-1))


def _make_triple(curve, T):
    T = np.asarray(T, dtype=float)
    g = _gradient_batch(curve, T)
    return OrbitTriple(
        t=tuple(float(v) for v in T),
        theta=tuple(float(v) for v in _angles(curve, T)),
        perimeter=float(_perimeter_batch(curve, T)),
        classification=classify(_hessian_batch(curve, T)),
        gradient_norm=float(np.linalg.norm(g)),
    )


# variational multistart ------------------------------------------------------

def _newton_perimeter(curve, T, max_iter=60):
    l = curve.length
    T = T.copy()
    alive = np.ones(len(T), dtype=bool)
    active = alive.copy()
    for _ in range(max_iter):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        Ti = T[idx]
        g = _gradient_batch(curve, Ti)
        gn = np.linalg.norm(g, axis=-1)
        H = _hessian_batch(curve, Ti)
        step = -np.einsum("nij,nj->ni", np.linalg.pinv(H, rcond=1e-8), g)
        sn = np.linalg.norm(step, axis=-1)
        scale = np.minimum(1.0, (l / 20) / np.maximum(sn, 1e-300))
        Ti = Ti + step * scale[:, None]
        T[idx] = Ti
        bad = ~np.isfinite(Ti).all(axis=-1) | (_min_gap(curve, Ti) < DISTINCT_TOL * l)
        alive[idx[bad]] = False
        done = bad | (gn < 1e-13 * l) | ((gn < GRADIENT_TOL * l) & (sn < 1e-13 * l))
        active[idx[done]] = False
    T = curve.reduce(T)
    g = _gradient_batch(curve, T)
    ok = alive & (np.linalg.norm(g, axis=-1) < GRADIENT_TOL * l) & (_min_gap(curve, T) >= DISTINCT_TOL * l)
    return T, ok


def _same_orbit(curve, A, B, tol):
    for shift in range(3):
        if np.max(np.abs(curve.wrap_difference(A - np.roll(B, shift)))) < tol:
            return True
    return False


def find_period3(curve: BoundaryCurve, n_seeds: int = 64, rng_seed: int = 0, threads: int = 1):
    """Multistart Newton on the perimeter gradient.

    Seeds are sorted uniform triples drawn from ``numpy.random.default_rng(rng_seed)``.
    Converged critical points are deduplicated modulo rotation/reversal of the
    triple and returned counterclockwise, sorted by ``(t0, theta0)``.
    """
    if n_seeds < 1:
        raise ValueError("n_seeds must be at least 1")
    rng = np.random.default_rng(rng_seed)
    seeds = np.sort(rng.uniform(0.0, curve.length, size=(n_seeds, 3)), axis=1)
    parts = map_chunks(lambda a, b: _newton_perimeter(curve, seeds[a:b]), n_seeds, 64, threads)
    T = np.concatenate([p[0] for p in parts])
    ok = np.concatenate([p[1] for p in parts])

    kept = []
    for row in np.sort(T[ok], axis=1):
        if not any(_same_orbit(curve, row, k, DEDUP_TOL * curve.length) for k in kept):
            kept.append(row)
    orbits = [_make_triple(curve, row) for row in kept]
    orbits.sort(key=lambda o: (o.t[0], o.theta[0]))
    return orbits


# phase-space quantities ---------------------------------------------------------

def _two_bounces(curve, t, theta):
    t1, th1, c1, s1 = shoot_batch(curve, t, theta)
    t2, th2, c2, s2 = shoot_batch(curve, t1, th1)
    ok = (s1 == OK) & (s2 == OK)
    return t1, th1, t2, th2, c1, c2, ok


def extended_length_batch(curve: BoundaryCurve, t, theta):
    """Perimeter of the triangle start point / first hit / second hit, closed by a straight side."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    _, _, t2, _, c1, c2, ok = _two_bounces(curve, t, theta)
    x0 = curve.position(t)
    x2 = curve.position(np.where(ok, t2, 0.0))
    closing = np.hypot(*(x2 - x0).T)
    return np.where(ok, c1 + c2 + closing, np.nan), ok


def extended_length(curve: BoundaryCurve, p: PhasePoint) -> float:
    value, ok = extended_length_batch(curve, p.t, p.theta)
    if not ok[0]:
        raise GrazingIntersection(f"extended length undefined at t={p.t!r}, theta={p.theta!r}")
    return float(value[0])


def orbit_from_phase(curve: BoundaryCurve, p: PhasePoint) -> OrbitTriple:
    """The triple visited from ``p`` (in visit order), assuming ``p`` is three-periodic."""
    t1, th1, t2, th2, _, _, ok = _two_bounces(curve, p.t, p.theta)
    if not ok[0]:
        raise GrazingIntersection(f"cannot follow the orbit of t={p.t!r}, theta={p.theta!r}")
    T = np.array([p.t, t1[0], t2[0]])
    orbit = _make_triple(curve, T)
    return OrbitTriple(orbit.t, (p.theta, float(th1[0]), float(th2[0])), orbit.perimeter,
                       orbit.classification, orbit.gradient_norm)


def _as_phase(obj):
    return obj.phase(0) if isinstance(obj, OrbitTriple) else obj


def fermat_defect(curve: BoundaryCurve, orbit, step: float = FERMAT_STEP) -> float:
    """Central difference of the extended length in ``theta`` at the first phase point."""
    p = _as_phase(orbit)
    values, ok = extended_length_batch(curve, [p.t, p.t], [p.theta + step, p.theta - step])
    if not ok.all():
        raise GrazingIntersection(f"extended length stencil failed at t={p.t!r}, theta={p.theta!r}")
    return float((values[0] - values[1]) / (2 * step))


def wojtkowski_residual(curve: BoundaryCurve, orbit: OrbitTriple) -> float:
    """``k(t0) L - 2 sin^3(theta0)``; must vanish where additionally ``D T^3 = id``."""
    k = float(curve.curvature(orbit.t[0]))
    return k * orbit.perimeter - 2.0 * math.sin(orbit.theta[0]) ** 3


def dt3_defect(curve: BoundaryCurve, p: PhasePoint, differential_fn=differential) -> float:
    """Frobenius distance between ``D T^3`` at ``p`` and the identity."""
    jac = np.asarray(differential_fn(curve, p, 3), dtype=float)
    return float(np.linalg.norm(jac - np.eye(2)))


def dt3_defect_batch(curve: BoundaryCurve, t, theta):
    jac, ok, _ = differential_batch(curve, t, theta, 3)
    d = np.linalg.norm(jac - np.eye(2), axis=(1, 2))
    return np.where(ok, d, np.nan), ok


def identity_diagnostics(curve: BoundaryCurve, t, theta):
    """Per-point ``(dt3_defect, wojtkowski_residual, ok)`` for arrays of period-3 phase points.

    The perimeter is taken from the extended length, which equals the orbit
    perimeter on three-periodic points.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    defect, ok1 = dt3_defect_batch(curve, t, theta)
    length, ok2 = extended_length_batch(curve, t, theta)
    residual = curve.curvature(t) * length - 2.0 * np.sin(theta) ** 3
    return defect, residual, ok1 & ok2


# T^3 fixed-point scan -----------------------------------------------------------

def _p3_residual(curve, t, theta):
    t3, th3, ok = power_batch(curve, t, theta, 3)
    F = np.stack([curve.wrap_difference(t3 - t), th3 - theta], axis=-1)
    return F, ok


def _newton_p3(curve, t, theta, tol, max_iter=60, patience=25):
    """Damped Newton on ``T^3 - id`` with a pseudo-inverse (families make ``DT^3 - I`` singular)."""
    l = curve.length
    t, theta = t.copy(), theta.copy()
    alive = np.ones(t.shape, dtype=bool)
    active = alive.copy()
    for it in range(max_iter):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        ti, thi = t[idx], theta[idx]
        t3, th3, J, ok = power_jacobian_batch(curve, ti, thi, 3)
        F = np.stack([curve.wrap_difference(t3 - ti), th3 - thi], axis=-1)
        J = J - np.eye(2)
        J[~ok] = np.eye(2)
        F[~ok] = 0.0
        step = -np.einsum("nij,nj->ni", np.linalg.pinv(J, rcond=1e-7), F)
        cap = np.minimum(1.0, np.minimum((l / 12) / np.maximum(np.abs(step[:, 0]), 1e-300),
                                         0.3 / np.maximum(np.abs(step[:, 1]), 1e-300)))
        step *= cap[:, None]
        fn = np.linalg.norm(F, axis=-1)
        sn = np.linalg.norm(step, axis=-1)
        converged = ok & (fn < 1e-3 * tol)
        move = ~converged
        t[idx] = np.where(move, curve.reduce(ti + step[:, 0]), ti)
        theta[idx] = np.where(move, thi + step[:, 1], thi)
        out = ~ok | (theta[idx] <= 1e-6) | (theta[idx] >= math.pi - 1e-6)
        if it >= patience:
            out |= fn > 1e-3  # still wandering: not in any basin
        alive[idx[out]] = False
        done = out | converged | ((fn < tol) & (sn < 1e-12))
        active[idx[done]] = False
    F, ok = _p3_residual(curve, t, theta)
    ok &= alive & (np.linalg.norm(np.where(np.isfinite(F), F, np.inf), axis=-1) < tol)
    return t, theta, ok


def sample_p3_points(curve: BoundaryCurve, grid_t: int, grid_theta: int, tol: float = 1e-9,
                     threads: int = 1):
    """Fixed points of ``T^3`` found by Newton from every cell of a ``grid_t x grid_theta`` grid.

    Returns ``(t, theta)`` arrays (unscaled arc length), deduplicated at
    resolution ``tol`` and sorted by ``(t, theta)``.
    """
    if grid_t < 8 or grid_theta < 8:
        raise ValueError("grid sizes must be at least 8")
    if not tol > 0:
        raise ValueError("tol must be positive")
    ti = (np.arange(grid_t) + 0.5) * (curve.length / grid_t)
    thj = (np.arange(grid_theta) + 0.5) * (math.pi / grid_theta)
    T0 = np.repeat(ti, grid_theta)
    TH0 = np.tile(thj, grid_t)

    parts = map_chunks(lambda a, b: _newton_p3(curve, T0[a:b], TH0[a:b], tol), T0.size, 1024, threads)
    t = np.concatenate([p[0] for p in parts])
    th = np.concatenate([p[1] for p in parts])
    ok = np.concatenate([p[2] for p in parts])
    t, th = t[ok], th[ok]
    if t.size == 0:
        return t, th

    t = curve.reduce(t)
    t = np.where(curve.length - t < tol, 0.0, t)  # one side of the seam at t = 0
    pts = np.stack([t, th], axis=1)
    # Collapse points sharing a tol-cell first (converged seeds pile up on the
    # same fixed point), then merge neighbouring cells within tol.
    _, first = np.unique(np.floor(pts / tol).astype(np.int64), axis=0, return_index=True)
    pts = pts[np.sort(first)]
    tree = cKDTree(pts, boxsize=[curve.length, 4.0 * math.pi])
    parent = np.arange(len(pts))

    def root(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in sorted(tree.query_pairs(tol)):
        ri, rj = root(i), root(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    reps = np.array(sorted({root(i) for i in range(len(pts))}))
    pts = pts[reps]
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    return pts[order, 0], pts[order, 1]


def sample_p3(curve: BoundaryCurve, grid_t: int, grid_theta: int, tol: float = 1e-9,
              threads: int = 1) -> PointCloud:
    """P^3 sample as a planar cloud ``(t * 2 pi / l, theta)``; may be empty."""
    t, th = sample_p3_points(curve, grid_t, grid_theta, tol, threads)
    pts = np.stack([t * (TWO_PI / curve.length), th], axis=1) if t.size else np.empty((0, 2))
    return PointCloud(pts, note=f"P3 sample of {curve.descriptor['kind']} boundary", allow_empty=True)


__all__ = [
    "OrbitTriple", "perimeter", "perimeter_gradient", "find_period3", "extended_length",
    "extended_length_batch", "orbit_from_phase", "fermat_defect", "wojtkowski_residual",
    "dt3_defect", "dt3_defect_batch", "identity_diagnostics", "sample_p3", "sample_p3_points",
    "classify",
]
