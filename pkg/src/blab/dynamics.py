"""The billiard map on the open annulus ``S^1 x (0, pi)`` and its differential.

The scalar functions (:func:`shoot`, :func:`iterate`, :func:`differential`,
:func:`measure_defect`) raise on failure.  The ``*_batch`` variants operate on
arrays of phase points and report failures through a boolean ``ok`` mask so
that grid scans can simply drop bad cells.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .boundary import TWO_PI, BoundaryCurve
from .errors import GrazingIntersection, NoIntersection, StepUnderflow

GRAZING_TOL = 1e-7
EXCLUSION = 1e-6
DIFF_STEP = 1e-5
MIN_STEP = 1e-12

OK, GRAZING, NO_HIT = 0, 1, 2


@dataclass(frozen=True)
class PhasePoint:
    """Birkhoff coordinates: arc length ``t`` and outgoing angle ``theta`` to the forward tangent."""

    t: float
    theta: float

    def __post_init__(self):
        if not (0.0 < self.theta < math.pi) or not math.isfinite(self.t):
            raise ValueError(f"phase point outside the open annulus: t={self.t}, theta={self.theta}")

    @classmethod
    def on(cls, curve: BoundaryCurve, t: float, theta: float) -> "PhasePoint":
        return cls(curve.reduce(float(t)), float(theta))


def _cross(ax, ay, bx, by):
    return ax * by - ay * bx


def _refine_roots(curve, a, b, ga, dx_, dy_, x0, y0, iters=80):
    """Safeguarded Newton for ``g(phi) = cross(d, x(phi) - x0)`` on brackets ``[a, b]``."""
    gb = _cross(dx_, dy_, *(curve.xy_native(b) - np.stack([x0, y0], axis=-1)).T)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(gb != ga, a - ga * (b - a) / (gb - ga), 0.5 * (a + b))
    active = np.ones(x.shape, dtype=bool)
    for _ in range(iters):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        xi = x[idx]
        pos, der, _ = curve.derivatives_native(xi)
        g = _cross(dx_[idx], dy_[idx], pos[:, 0] - x0[idx], pos[:, 1] - y0[idx])
        dg = _cross(dx_[idx], dy_[idx], der[:, 0], der[:, 1])
        same = np.sign(g) == np.sign(ga[idx])
        ai = np.where(same, xi, a[idx])
        bi = np.where(same, b[idx], xi)
        ga[idx] = np.where(same, g, ga[idx])
        a[idx], b[idx] = ai, bi
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = xi - g / dg
        small = np.abs(newton - xi) <= 1e-12 * (1.0 + np.abs(xi))
        inside = small | (newton > np.minimum(ai, bi)) & (newton < np.maximum(ai, bi))
        xn = np.where(inside & np.isfinite(newton), newton, 0.5 * (ai + bi))
        done = small | (g == 0) | (np.abs(bi - ai) <= 1e-15 * (1.0 + np.abs(xi)))
        x[idx] = np.where(g == 0, xi, xn)
        active[idx[done]] = False
    return x


def shoot_batch(curve: BoundaryCurve, t, theta):
    """Vectorized billiard map.

    Returns ``(t2, theta2, chord, status)`` where ``status`` is 0 for success,
    1 for a grazing segment and 2 when no forward intersection was found.
    Failed entries carry NaN.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    n = t.size
    K = curve.sweep_phi.size
    step = TWO_PI / K

    phi1 = np.mod(curve.phi_of_t(t), TWO_PI)
    pos, der, _ = curve.derivatives_native(phi1)
    x0, y0 = pos[:, 0], pos[:, 1]
    speed = np.hypot(der[:, 0], der[:, 1])
    direction = curve.tangent_angle_native(phi1) + theta
    dx_, dy_ = np.cos(direction), np.sin(direction)

    # Signed distance on the fixed grid is one outer product.  Grid intervals
    # touching the excluded arc (phi1 - w, phi1 + w) are dropped and replaced
    # by [lo, first grid point] and [last grid point, hi].
    w = EXCLUSION * curve.length / speed
    lo, hi = phi1 + w, phi1 + TWO_PI - w
    offset = dx_ * y0 - dy_ * x0
    g = np.outer(dx_, curve.sweep_xy[:, 1]) - np.outer(dy_, curve.sweep_xy[:, 0]) - offset[:, None]
    g_next = np.roll(g, -1, axis=1)
    prod = g * g_next
    change = (prod < 0) | ((prod == 0) & ((g != 0) | (g_next != 0)))
    ja = np.floor(lo / step).astype(np.int64) + 1
    jb = np.ceil(hi / step).astype(np.int64) - 1 - K
    for k in range(int((ja - jb).max())):
        col = np.mod(jb + k, K)
        rows_k = np.nonzero(jb + k < ja)[0]
        change[rows_k, col[rows_k]] = False
    rows, cols = np.nonzero(change)
    a = cols * step
    b = a + step
    ga = g[rows, cols]

    pa, pb = ja * step, (jb + K) * step
    ends = curve.xy_native(np.stack([lo, pa, pb, hi], axis=1))
    ge = _cross(dx_[:, None], dy_[:, None], ends[..., 0] - x0[:, None], ends[..., 1] - y0[:, None])
    extra_rows, extra_a, extra_b, extra_g = [rows], [a], [b], [ga]
    for i, j in ((0, 1), (2, 3)):
        pe = ge[:, i] * ge[:, j]
        sel = np.nonzero((pe < 0) | ((pe == 0) & ((ge[:, i] != 0) | (ge[:, j] != 0))))[0]
        extra_rows.append(sel)
        extra_a.append(np.stack([lo, pa, pb, hi], axis=1)[sel, i])
        extra_b.append(np.stack([lo, pa, pb, hi], axis=1)[sel, j])
        extra_g.append(ge[sel, i])
    rows = np.concatenate(extra_rows)
    a = np.concatenate(extra_a).astype(float)
    b = np.concatenate(extra_b).astype(float)
    ga = np.concatenate(extra_g)

    t2 = np.full(n, np.nan)
    th2 = np.full(n, np.nan)
    chord = np.full(n, np.nan)
    status = np.full(n, NO_HIT, dtype=np.int64)
    if rows.size:
        root = _refine_roots(curve, a, b, ga, dx_[rows], dy_[rows], x0[rows], y0[rows])
        hit = curve.xy_native(root)
        fwd = dx_[rows] * (hit[:, 0] - x0[rows]) + dy_[rows] * (hit[:, 1] - y0[rows])
        fwd = np.where(fwd > 0, fwd, np.inf)
        order = np.lexsort((fwd, rows))
        first = order[np.unique(rows[order], return_index=True)[1]]
        first = first[np.isfinite(fwd[first])]
        r = rows[first]
        phi2 = np.mod(root[first], TWO_PI)
        p2, d2, _ = curve.derivatives_native(phi2)
        sp2 = np.hypot(d2[:, 0], d2[:, 1])
        tx, ty = d2[:, 0] / sp2, d2[:, 1] / sp2
        # reflection keeps the tangential component and flips the normal one
        th2[r] = np.arctan2(-_cross(tx, ty, dx_[r], dy_[r]), tx * dx_[r] + ty * dy_[r])
        t2[r] = curve.reduce(curve.t_of_phi(phi2))
        chord[r] = np.hypot(p2[:, 0] - x0[r], p2[:, 1] - y0[r])
        status[r] = OK
    graze = (theta < GRAZING_TOL) | (theta > math.pi - GRAZING_TOL)
    graze |= (status == OK) & ((th2 < GRAZING_TOL) | (th2 > math.pi - GRAZING_TOL))
    status[graze] = GRAZING
    bad = status != OK
    t2[bad] = th2[bad] = chord[bad] = np.nan
    return t2, th2, chord, status


def _raise_for(status, p, step=None):
    where = f" at step {step}" if step is not None else ""
    if status == GRAZING:
        raise GrazingIntersection(f"grazing segment from t={p.t!r}, theta={p.theta!r}{where}", step=step)
    raise NoIntersection(f"no forward intersection from t={p.t!r}, theta={p.theta!r}{where}", step=step)


def shoot(curve: BoundaryCurve, p: PhasePoint):
    """One application of the billiard map: returns ``(T p, chord_length)``."""
    t2, th2, chord, status = shoot_batch(curve, p.t, p.theta)
    if status[0] != OK:
        _raise_for(status[0], p)
    return PhasePoint(float(t2[0]), float(th2[0])), float(chord[0])


def iterate(curve: BoundaryCurve, p: PhasePoint, n: int):
    """The orbit segment ``[T p, T^2 p, ..., T^n p]``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    out = []
    for step in range(1, n + 1):
        t2, th2, _, status = shoot_batch(curve, p.t, p.theta)
        if status[0] != OK:
            _raise_for(status[0], p, step)
        p = PhasePoint(float(t2[0]), float(th2[0]))
        out.append(p)
    return out


def trace(curve: BoundaryCurve, p: PhasePoint, n: int):
    """Like :func:`iterate` but also returns chord lengths (used by the CSV trace)."""
    rows = []
    for step in range(1, n + 1):
        t2, th2, chord, status = shoot_batch(curve, p.t, p.theta)
        if status[0] != OK:
            _raise_for(status[0], p, step)
        p = PhasePoint(float(t2[0]), float(th2[0]))
        rows.append((step, p.t, p.theta, float(chord[0])))
    return rows


def power_batch(curve: BoundaryCurve, t, theta, n: int):
    """``T^n`` on arrays; returns ``(t_n, theta_n, ok)``."""
    t = np.atleast_1d(np.asarray(t, dtype=float)).copy()
    theta = np.atleast_1d(np.asarray(theta, dtype=float)).copy()
    ok = np.ones(t.shape, dtype=bool)
    for _ in range(n):
        idx = np.nonzero(ok)[0]
        t2, th2, _, status = shoot_batch(curve, t[idx], theta[idx])
        t[idx], theta[idx] = t2, th2
        ok[idx] = status == OK
    t[~ok] = np.nan
    theta[~ok] = np.nan
    return t, theta, ok


def power_jacobian_batch(curve: BoundaryCurve, t, theta, n: int):
    """``T^n`` together with its Jacobian from the closed-form one-bounce linearization.

    One bounce from ``(t0, th0)`` to ``(t1, th1)`` along a chord of length ``L``
    has Jacobian ``[[k0 L - sin th0, L], [k0 k1 L - k0 sin th1 - k1 sin th0,
    k1 L - sin th1]] / sin th1``.  Used to drive Newton iterations; the
    published :func:`differential` stays a finite-difference estimate.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float)).copy()
    theta = np.atleast_1d(np.asarray(theta, dtype=float)).copy()
    jac = np.broadcast_to(np.eye(2), t.shape + (2, 2)).copy()
    ok = np.ones(t.shape, dtype=bool)
    k0 = curve.curvature(t)
    for _ in range(n):
        idx = np.nonzero(ok)[0]
        t1, th1, L, status = shoot_batch(curve, t[idx], theta[idx])
        good = status == OK
        k1 = np.where(good, curve.curvature(np.where(good, t1, 0.0)), 0.0)
        s0, s1 = np.sin(theta[idx]), np.sin(th1)
        step = np.empty((idx.size, 2, 2))
        step[:, 0, 0] = k0[idx] * L - s0
        step[:, 0, 1] = L
        step[:, 1, 0] = k0[idx] * k1 * L - k0[idx] * s1 - k1 * s0
        step[:, 1, 1] = k1 * L - s1
        step /= s1[:, None, None]
        jac[idx] = step @ jac[idx]
        t[idx], theta[idx], k0[idx] = t1, th1, k1
        ok[idx] = good
    t[~ok] = theta[~ok] = np.nan
    jac[~ok] = np.nan
    return t, theta, jac, ok


def jacobian_central(curve, t, theta, n, ht, hth):
    """Central-difference Jacobian of ``T^n`` with steps ``ht`` (arc length) and ``hth`` (angle)."""
    m = t.size
    ts = np.concatenate([t + ht, t - ht, t, t])
    ths = np.concatenate([theta, theta, theta + hth, theta - hth])
    tn, thn, ok = power_batch(curve, ts, ths, n)
    tn, thn, ok = tn.reshape(4, m), thn.reshape(4, m), ok.reshape(4, m)
    jac = np.empty((m, 2, 2))
    jac[:, 0, 0] = curve.wrap_difference(tn[0] - tn[1]) / (2 * ht)
    jac[:, 1, 0] = (thn[0] - thn[1]) / (2 * ht)
    jac[:, 0, 1] = curve.wrap_difference(tn[2] - tn[3]) / (2 * hth)
    jac[:, 1, 1] = (thn[2] - thn[3]) / (2 * hth)
    return jac, ok.all(axis=0)


def differential_batch(curve: BoundaryCurve, t, theta, order: int = 1, step: float = DIFF_STEP):
    """Jacobians of ``T^order`` at many points, shaped ``(m, 2, 2)``, plus an ``ok`` mask.

    Central differences at steps ``h`` and ``h/2`` combined by one Richardson
    extrapolation.  The angle step shrinks near the annulus edges; points
    where it would fall below ``1e-12`` are flagged in the third return value.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    ht = step * curve.length
    room = np.minimum(theta, math.pi - theta) - GRAZING_TOL
    hth = np.minimum(step, 0.25 * room)
    underflow = hth < MIN_STEP
    hth = np.where(underflow, step, hth)
    coarse, ok1 = jacobian_central(curve, t, theta, order, ht, hth)
    fine, ok2 = jacobian_central(curve, t, theta, order, 0.5 * ht, 0.5 * hth)
    jac = (4.0 * fine - coarse) / 3.0
    ok = ok1 & ok2 & ~underflow
    return jac, ok, underflow


def differential(curve: BoundaryCurve, p: PhasePoint, order: int = 1) -> np.ndarray:
    """2x2 Jacobian of ``T`` (``order=1``) or ``T^3`` (``order=3``) acting on ``(dt, dtheta)``."""
    if order not in (1, 3):
        raise ValueError("order must be 1 or 3")
    jac, ok, underflow = differential_batch(curve, p.t, p.theta, order)
    if underflow[0]:
        raise StepUnderflow(f"angle step below {MIN_STEP} at theta={p.theta!r}")
    if not ok[0]:
        raise GrazingIntersection(f"stencil around t={p.t!r}, theta={p.theta!r} hit a grazing segment")
    return jac[0]


def measure_defect_batch(curve: BoundaryCurve, t, theta):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    jac, ok, _ = differential_batch(curve, t, theta, 1)
    _, th2, _, status = shoot_batch(curve, t, theta)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    defect = np.abs(det) * np.sin(th2) / np.sin(theta) - 1.0
    ok &= status == OK
    return np.where(ok, defect, np.nan), ok


def measure_defect(curve: BoundaryCurve, p: PhasePoint) -> float:
    """``|det D_pT| sin(theta_2) / sin(theta_1) - 1``; zero when ``sin(theta) dtheta dt`` is preserved."""
    jac = differential(curve, p, 1)
    q, _ = shoot(curve, p)
    return float(abs(np.linalg.det(jac)) * math.sin(q.theta) / math.sin(p.theta) - 1.0)
