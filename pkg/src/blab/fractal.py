"""Finite-sample estimators for dimension, densities and measure-theoretic tangents.

A finite cloud carries no Hausdorff measure, so every density below uses the
normalized counting measure ``mu(B) = mass_scale * #(cloud in B) / #cloud``.
``mass_scale`` defaults to the grid-cover upper bound on the Hausdorff
pre-measure at the finest configured scale and can always be overridden.

Densities divide by ``(2r)^s``; the tangent test works with mass fractions
(complement mass over ball mass), so its output does not carry the ``r^s``
normalization of the limit it approximates.  The factor ``2^s`` between the
two conventions is written into :meth:`TangentReport.to_json`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial import ConvexHull, QhullError

from .errors import NotAccumulationPoint, NotAsymptotic, OutOfRange, TooFewPoints

DEDUP_RESOLUTION = 1e-12
N_DIRECTIONS = 360


class PointCloud:
    """Finite planar point set with duplicates (at resolution 1e-12) removed."""

    def __init__(self, points, note: str = "", allow_empty: bool = False):
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        if pts.size:
            keys = np.floor(pts / DEDUP_RESOLUTION).astype(np.int64)
            _, first = np.unique(keys, axis=0, return_index=True)
            pts = pts[np.sort(first)]
        elif not allow_empty:
            raise TooFewPoints("a point cloud needs at least one point")
        self.points = pts
        self.note = note
        self._diameter = None

    def __len__(self):
        return len(self.points)

    @property
    def diameter(self) -> float:
        if self._diameter is None:
            self._diameter = _diameter(self.points)
        return self._diameter


def _diameter(pts):
    if len(pts) < 2:
        return 0.0
    try:
        cand = pts[ConvexHull(pts).vertices]
    except (QhullError, ValueError):
        # collinear: the extremes along the principal axis are the endpoints
        centered = pts - pts.mean(axis=0)
        axis = np.linalg.svd(centered, full_matrices=False)[2][0]
        proj = centered @ axis
        cand = pts[[np.argmin(proj), np.argmax(proj)]]
    diff = cand[:, None, :] - cand[None, :, :]
    return float(np.sqrt((diff**2).sum(-1)).max())


@dataclass
class DimensionEstimate:
    slope: float
    intercept: float
    r_squared: float
    scales: list
    counts: list = field(default_factory=list)

    def to_json(self):
        return {"slope": self.slope, "intercept": self.intercept,
                "r_squared": self.r_squared, "scales": list(self.scales)}


@dataclass
class TangentReport:
    has_tangent: bool
    gamma: float | None
    excluded_fraction_curve: list
    eta_used: float
    s: float = 1.0
    threshold: float = 0.05
    reason: str = ""

    def to_json(self):
        return {
            "has_tangent": self.has_tangent,
            "gamma": self.gamma,
            "eta": self.eta_used,
            "curve": [[r, f] for r, f in self.excluded_fraction_curve],
            "threshold": self.threshold,
            "s": self.s,
            "density_to_tangent_factor": 2.0 ** self.s,
            "reason": self.reason,
        }


GRID_ANGLES = 16
GRID_SHIFTS = 2


def _grid_count(pts, eps, offset=(0.0, 0.0)):
    keys = np.floor((pts - pts.min(axis=0)) / eps + np.asarray(offset)).astype(np.int64)
    span = int(keys[:, 1].max()) + 1
    return len(np.unique(keys[:, 0] * span + keys[:, 1]))


def _mean_grid_count(pts, eps):
    """Occupied-box count averaged over rotated and shifted grids.

    Averaging over grid placements damps the lacunarity oscillations of
    self-similar sets and makes the count insensitive to rigid motions.
    """
    shifts = np.arange(GRID_SHIFTS) / GRID_SHIFTS
    total = []
    for a in np.arange(GRID_ANGLES) * (0.5 * math.pi / GRID_ANGLES):
        c, s = math.cos(a), math.sin(a)
        q = pts @ np.array([[c, -s], [s, c]])
        total.extend(_grid_count(q, eps, (ox, oy)) for ox in shifts for oy in shifts)
    return float(np.mean(total))


def box_dimension(cloud: PointCloud, n_scales: int = 6) -> DimensionEstimate:
    """Box-counting slope over dyadic boxes ``D/2^3 ... D/2^(2+n_scales)``, ``D`` the cloud diameter.

    Counts are averaged over 64 rotated and shifted copies of each grid
    before the least-squares fit of ``log N`` against ``log(1/eps)``.
    """
    if len(cloud) < 100:
        raise TooFewPoints(f"box counting needs at least 100 distinct points, got {len(cloud)}")
    if n_scales < 4:
        raise OutOfRange("n_scales must be at least 4")
    D = cloud.diameter
    scales = D / 2.0 ** np.arange(3, 3 + n_scales)
    counts = np.array([_mean_grid_count(cloud.points, eps) for eps in scales])
    x, y = np.log(1.0 / scales), np.log(counts)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    sst = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / sst if sst > 0 else 0.0
    return DimensionEstimate(float(slope), float(intercept), max(0.0, min(1.0, r2)),
                             [float(e) for e in scales], [float(c) for c in counts])


def hausdorff_premeasure(cloud: PointCloud, s: float, delta: float) -> float:
    """Upper bound on ``H^s_delta`` from the square grid of side ``delta/sqrt(2)``.

    Each occupied cell has diameter exactly ``delta`` and contributes
    ``delta**s``; this is an admissible cover, not the infimum.
    """
    if not 0 <= s <= 2:
        raise OutOfRange(f"exponent s={s} outside [0, 2]")
    if not delta > 0:
        raise OutOfRange("delta must be positive")
    return _grid_count(cloud.points, delta / math.sqrt(2.0)) * delta**s


def _check_radii(radii):
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or radii.size < 4 or np.any(radii <= 0) or np.any(np.diff(radii) >= 0):
        raise OutOfRange("radii must be at least 4 strictly decreasing positive values")
    return radii


def default_radii(cloud: PointCloud, levels: int = 6):
    return cloud.diameter / 8.0 / 2.0 ** np.arange(levels)


def _mass_per_point(cloud, s, radii, mass_scale):
    if mass_scale is None:
        mass_scale = hausdorff_premeasure(cloud, s, float(radii[-1]))
    return mass_scale / len(cloud)


def density(cloud: PointCloud, p, s: float, radii, mass_scale: float | None = None):
    """Empirical ``(lower, upper)`` density: min and max of ``mu(B(p, r)) / (2r)^s`` over ``radii``.

    Points outside the cloud simply see empty balls.
    """
    if not 0 <= s <= 2:
        raise OutOfRange(f"exponent s={s} outside [0, 2]")
    radii = _check_radii(radii)
    unit = _mass_per_point(cloud, s, radii, mass_scale)
    dist = np.hypot(*(cloud.points - np.asarray(p, dtype=float)).T)
    counts = (dist[None, :] <= radii[:, None]).sum(axis=1)
    ratios = counts * unit / (2.0 * radii) ** s
    return float(ratios.min()), float(ratios.max())


def _angle_gap(angles, gamma):
    return np.abs(np.mod(angles - gamma + math.pi, 2 * math.pi) - math.pi)


def angular_density(cloud: PointCloud, p, s: float, gamma: float, eta: float, radii,
                    mass_scale: float | None = None) -> float:
    """Largest ``mu(W_p(gamma; r, eta)) / (2r)^s`` over ``radii``; ``p`` itself belongs to every sector."""
    if not 0 < eta <= math.pi / 2:
        raise OutOfRange(f"half-angle eta={eta} outside (0, pi/2]")
    if not 0 <= s <= 2:
        raise OutOfRange(f"exponent s={s} outside [0, 2]")
    radii = _check_radii(radii)
    unit = _mass_per_point(cloud, s, radii, mass_scale)
    rel = cloud.points - np.asarray(p, dtype=float)
    dist = np.hypot(rel[:, 0], rel[:, 1])
    ang = np.arctan2(rel[:, 1], rel[:, 0])
    in_sector = (dist == 0) | (_angle_gap(ang, gamma) <= eta)
    counts = ((dist[None, :] <= radii[:, None]) & in_sector[None, :]).sum(axis=1)
    return float((counts * unit / (2.0 * radii) ** s).max())


def _line_gap(angles, gamma):
    # angular distance to the full line through direction gamma
    return np.abs(np.mod(angles - gamma + math.pi / 2, math.pi) - math.pi / 2)


def tangent_test(cloud: PointCloud, p, s: float = 1.0, eta_grid=(0.05, 0.1, 0.2), radii=None,
                 threshold: float = 0.05, min_neighbors: int = 3) -> TangentReport:
    """Look for a direction whose double sector captures almost all local mass.

    For each of 360 candidate directions, each half-angle in ``eta_grid`` and
    each radius, the fraction of the ball's points (other than ``p``) lying
    outside both sectors ``W_p(gamma)`` and ``W_p(gamma + pi)`` is computed.  A
    tangent is declared when, for every half-angle, the fraction at the two
    finest radii is below ``threshold``.  Among the best grid directions the one
    with the smallest mean squared sine of the neighbour angles is refined by a
    bounded scalar search on that same objective.
    """
    radii = _check_radii(default_radii(cloud) if radii is None else radii)
    etas = np.sort(np.asarray(eta_grid, dtype=float))
    p = np.asarray(p, dtype=float)
    eta_used = float(etas[0])

    def report(has, gamma, curve, reason=""):
        return TangentReport(bool(has), gamma, curve, eta_used, s, threshold, reason)

    _, upper = density(cloud, p, s, radii, mass_scale=1.0)
    if upper <= 0:
        return report(False, None, [], "zero upper density")

    rel = cloud.points - p
    dist = np.hypot(rel[:, 0], rel[:, 1])
    sel = (dist > 0) & (dist <= radii[0])
    ang = np.arctan2(rel[sel, 1], rel[sel, 0])
    d = dist[sel]
    in_r = d[None, :] <= radii[:, None]
    n_r = in_r.sum(axis=1)
    if n_r[-1] < min_neighbors or n_r[-2] < min_neighbors:
        return report(False, None, [], "too few neighbours at the finest radii")

    gammas = np.arange(N_DIRECTIONS) * (math.pi / N_DIRECTIONS)

    def fractions(gs):
        gap = _line_gap(ang[None, :], np.asarray(gs)[:, None])
        out = np.empty((len(gs), etas.size, radii.size))
        for e, eta in enumerate(etas):
            outside = gap > eta
            out[:, e, :] = (outside[:, None, :] & in_r[None, :, :]).sum(axis=2) / np.maximum(n_r, 1)
        return out

    frac = fractions(gammas)
    score = frac[:, :, -2:].max(axis=(1, 2))
    a_near = ang[d <= radii[-2]]

    def spread(g):
        return np.mean(np.sin(a_near[None, :] - np.atleast_1d(g)[:, None]) ** 2, axis=1)

    # many directions can tie on the complement fraction; break ties by spread
    tied = np.nonzero(score == score.min())[0]
    best = int(tied[np.argmin(spread(gammas[tied]))])
    g_best = gammas[best]
    res = minimize_scalar(lambda g: float(spread(g)[0]),
                          bounds=(g_best - math.pi / N_DIRECTIONS, g_best + math.pi / N_DIRECTIONS),
                          method="bounded", options={"xatol": 1e-6})
    g_ref = float(np.mod(res.x, math.pi))
    f_ref = fractions([g_ref])[0]
    passes_ref = bool(np.all(f_ref[:, -2:] < threshold))
    passes_grid = bool(np.all(frac[best][:, -2:] < threshold))
    chosen = f_ref if passes_ref or not passes_grid else frac[best]
    curve = [(float(r), float(chosen[0, i])) for i, r in enumerate(radii)]
    has = passes_ref or passes_grid
    return report(has, g_ref if has else None, curve, "" if has else "complement mass above threshold")


def asymptotic_ray(cloud: PointCloud, p, n_levels: int = 12, scale: float = 1.0):
    """Nested angular windows converging to a direction along which ``p`` is approached.

    Level ``n`` keeps the cloud points within ``scale/n`` of ``p`` and picks,
    among windows of half-width ``2^-n`` whose centres lie in the closure of
    the previous window, the one holding the most points (ties go to the
    smallest centre).  Returns the final centre in ``[0, 2 pi)`` and one point
    index per level (the farthest admissible point).
    """
    if n_levels < 1:
        raise OutOfRange("n_levels must be positive")
    p = np.asarray(p, dtype=float)
    rel = cloud.points - p
    dist = np.hypot(rel[:, 0], rel[:, 1])
    ang = np.arctan2(rel[:, 1], rel[:, 0])
    for n in range(1, n_levels + 1):
        if np.count_nonzero((dist > 0) & (dist <= scale / n)) < n_levels:
            raise NotAccumulationPoint(f"fewer than {n_levels} points within {scale / n:g} of p")

    chosen = []
    center = None
    for n in range(1, n_levels + 1):
        half = 0.5**n
        if center is None:
            centers = np.arange(0.0, 2 * math.pi, half)
        else:
            centers = center + np.arange(-2, 3) * half
        ball = (dist > 0) & (dist <= scale / n)
        hits = _angle_gap(ang[ball][None, :], centers[:, None]) <= half
        counts = hits.sum(axis=1)
        if counts.max() == 0:
            raise NotAccumulationPoint(f"no points left in the nested windows at level {n}")
        top = np.nonzero(counts == counts.max())[0]
        k = top[np.argmin(centers[top])]
        center = float(centers[k])
        members = np.nonzero(ball)[0][hits[k]]
        chosen.append(int(members[np.argmax(dist[members])]))
    return float(np.mod(center, 2 * math.pi)), chosen


def ray_residuals(cloud: PointCloud, p, gamma: float, indices):
    """``dist(p_k, R) / |p_k - p|`` for the selected points, ``R`` the ray at angle ``gamma``."""
    rel = cloud.points[np.asarray(indices)] - np.asarray(p, dtype=float)
    u = rel / np.hypot(rel[:, 0], rel[:, 1])[:, None]
    v = np.array([math.cos(gamma), math.sin(gamma)])
    along = u @ v
    perp = np.abs(u[:, 0] * v[1] - u[:, 1] * v[0])
    return np.where(along >= 0, perp, 1.0)


def derivative_along(points, p, f_values, f_p, asymptotic_tol: float = 1e-2):
    """Directional derivative as the limit of ``(F(p_k) - F(p)) / |p_k - p|``.

    ``points`` must approach ``p`` along a ray.  The difference quotients of
    the closer half of the sequence are fitted by a quadratic in
    ``|p_k - p|`` and the intercept is returned.
    """
    pts = np.asarray(points, dtype=float)
    p = np.asarray(p, dtype=float)
    fv = np.asarray(f_values, dtype=float)
    fp = np.asarray(f_p, dtype=float)
    rel = pts - p
    h = np.hypot(rel[:, 0], rel[:, 1])
    if len(pts) < 4 or np.any(h == 0):
        raise NotAsymptotic("need at least four points distinct from p")
    tail = slice(len(pts) // 2, None)
    if not h[tail].max() < h[: len(pts) // 2].max():
        raise NotAsymptotic("sequence does not approach p")
    u = rel / h[:, None]
    v = u[-1]
    drift = np.abs(u[tail, 0] * v[1] - u[tail, 1] * v[0])
    if drift.max() > asymptotic_tol or np.any(u[tail] @ v < 0):
        raise NotAsymptotic(f"tail deviates from a ray by {drift.max():.3g}")
    q = (fv - fp) / (h if fv.ndim == 1 else h[:, None])
    coef = np.polynomial.polynomial.polyfit(h[tail], q[tail], 2)
    est = coef[0]
    return float(est) if np.ndim(est) == 0 else np.asarray(est)
