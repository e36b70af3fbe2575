"""Closed planar billiard boundaries in unit-speed parametrization.

Every curve is built from a native parameter ``phi`` in ``[0, 2*pi)``:

* circle   ``R (cos phi, sin phi)``
* ellipse  ``(a cos phi, b sin phi)``
* fourier  polar graph ``r(phi) (cos phi, sin phi)`` with
  ``r(phi) = r0 + sum_m a_m cos(m phi) + b_m sin(m phi)``

Arc length ``t(phi)`` is obtained from the Fourier series of the speed
``|dx/dphi|`` (the trapezoid rule is spectrally accurate for periodic
analytic integrands), which gives ``t(phi)`` in closed form.  The inverse
``phi(t)`` starts from a monotone knot table and is polished by Newton steps.
All curves are traversed counterclockwise; curvature is positive for convex
boundaries.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.spatial import cKDTree

from .errors import InvalidDescriptor, NonPositiveRadius, NonSmooth, SelfIntersecting

TWO_PI = 2.0 * math.pi

MAX_HARMONIC = 32
SPEED_SAMPLES = 8192
TABLE_KNOTS = 8192
SWEEP_SAMPLES = 512
CHECK_SAMPLES = 4096


def _as_float_list(values, name):
    try:
        return [float(v) for v in values]
    except TypeError as exc:
        raise InvalidDescriptor(f"{name} must be a list of numbers") from exc


def normalize_descriptor(descriptor: dict) -> dict:
    """Validate the JSON-style descriptor and return a canonical copy."""
    if not isinstance(descriptor, dict) or "kind" not in descriptor:
        raise InvalidDescriptor("boundary descriptor needs a 'kind' field")
    kind = descriptor["kind"]
    try:
        if kind == "circle":
            out = {"kind": "circle", "R": float(descriptor["R"])}
            if not out["R"] > 0:
                raise NonPositiveRadius(f"circle radius must be positive, got {out['R']}")
        elif kind == "ellipse":
            out = {"kind": "ellipse", "a": float(descriptor["a"]), "b": float(descriptor["b"])}
            if not (out["a"] > 0 and out["b"] > 0):
                raise NonPositiveRadius(f"ellipse axes must be positive, got a={out['a']}, b={out['b']}")
        elif kind == "fourier":
            out = {
                "kind": "fourier",
                "r0": float(descriptor["r0"]),
                "cos": _as_float_list(descriptor.get("cos", []), "cos"),
                "sin": _as_float_list(descriptor.get("sin", []), "sin"),
            }
            if not out["r0"] > 0:
                raise NonPositiveRadius(f"r0 must be positive, got {out['r0']}")
            if max(len(out["cos"]), len(out["sin"])) > MAX_HARMONIC:
                raise InvalidDescriptor(f"fourier series limited to m <= {MAX_HARMONIC}")
        else:
            raise InvalidDescriptor(f"unknown boundary kind {kind!r}")
    except KeyError as exc:
        raise InvalidDescriptor(f"{kind} descriptor is missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InvalidDescriptor):
            raise
        raise InvalidDescriptor(f"malformed {kind} descriptor: {exc}") from None
    return out


def _harmonics(phi, n):
    """``exp(i m phi)`` for ``m = 1..n`` as columns, built by repeated multiplication."""
    z = np.exp(1j * phi)
    return np.cumprod(np.repeat(z[..., None], n, axis=-1), axis=-1)


class BoundaryCurve:
    """Immutable closed C^3 curve with arc-length access.

    Scalar or array ``t`` is accepted everywhere; ``t`` is taken modulo the
    total length ``length`` except in :meth:`tangent_angle`, which returns a
    continuous lift (it grows by ``2*pi`` per turn).
    """

    def __init__(self, descriptor: dict, table_knots: int = TABLE_KNOTS,
                 curvature_bound: float = 1.0e3):
        self.descriptor = normalize_descriptor(descriptor)
        kind = self.descriptor["kind"]
        self.kind = kind
        if kind == "fourier":
            m_cos = np.arange(1, len(self.descriptor["cos"]) + 1, dtype=float)
            m_sin = np.arange(1, len(self.descriptor["sin"]) + 1, dtype=float)
            self._fc = (np.asarray(self.descriptor["cos"]), m_cos)
            self._fs = (np.asarray(self.descriptor["sin"]), m_sin)
            grid = np.linspace(0.0, TWO_PI, CHECK_SAMPLES, endpoint=False)
            r = self._radius(grid)[0]
            if np.min(r) <= 0:
                raise NonPositiveRadius(f"r(phi) reaches {np.min(r):.3g} <= 0")

        # Fourier series of the speed |dx/dphi|.
        phi = np.arange(SPEED_SAMPLES) * (TWO_PI / SPEED_SAMPLES)
        c = np.fft.rfft(self.speed_native(phi)) / SPEED_SAMPLES
        self._c0 = float(c[0].real)
        coeff = np.abs(c[1:-1])
        keep = np.nonzero(coeff > 1e-15 * self._c0)[0]
        n_modes = int(keep[-1]) + 1 if keep.size else 0
        self._modes = np.arange(1, n_modes + 1, dtype=float)
        self._a = 2.0 * c[1:n_modes + 1].real
        self._b = -2.0 * c[1:n_modes + 1].imag
        self._sa = self._a / self._modes
        self._sb = self._b / self._modes
        self.length = TWO_PI * self._c0

        self._phi_knots = np.linspace(0.0, TWO_PI, table_knots + 1)
        self._t_knots = self.t_of_phi(self._phi_knots)
        self._t_knots[-1] = self.length
        if np.any(np.diff(self._t_knots) <= 0):
            raise NonSmooth("arc-length table is not monotone")

        # Fixed native sweep used by the ray intersection search.
        self.sweep_phi = np.arange(SWEEP_SAMPLES) * (TWO_PI / SWEEP_SAMPLES)
        self.sweep_xy = self.xy_native(self.sweep_phi)

        self._check_shape(curvature_bound)

    # native parametrization -------------------------------------------------

    def _radius(self, phi):
        """r, r', r'', r''' of a fourier polar graph."""
        phi = np.asarray(phi, dtype=float)
        r = np.full(phi.shape, self.descriptor["r0"])
        r1 = np.zeros(phi.shape)
        r2 = np.zeros(phi.shape)
        r3 = np.zeros(phi.shape)
        (ac, mc), (bs, ms) = self._fc, self._fs
        if ac.size:
            arg = np.multiply.outer(phi, mc)
            cs, sn = np.cos(arg), np.sin(arg)
            r = r + cs @ ac
            r1 = r1 - sn @ (ac * mc)
            r2 = r2 - cs @ (ac * mc**2)
            r3 = r3 + sn @ (ac * mc**3)
        if bs.size:
            arg = np.multiply.outer(phi, ms)
            cs, sn = np.cos(arg), np.sin(arg)
            r = r + sn @ bs
            r1 = r1 + cs @ (bs * ms)
            r2 = r2 - sn @ (bs * ms**2)
            r3 = r3 - cs @ (bs * ms**3)
        return r, r1, r2, r3

    def derivatives_native(self, phi):
        """Position and first two derivatives in ``phi``, each shaped ``(..., 2)``."""
        phi = np.asarray(phi, dtype=float)
        c, s = np.cos(phi), np.sin(phi)
        d = self.descriptor
        if self.kind == "circle":
            R = d["R"]
            x = np.stack([R * c, R * s], axis=-1)
            dx = np.stack([-R * s, R * c], axis=-1)
            ddx = -x
        elif self.kind == "ellipse":
            a, b = d["a"], d["b"]
            x = np.stack([a * c, b * s], axis=-1)
            dx = np.stack([-a * s, b * c], axis=-1)
            ddx = -x
        else:
            r, r1, r2, _ = self._radius(phi)
            er = np.stack([c, s], axis=-1)
            ephi = np.stack([-s, c], axis=-1)
            x = r[..., None] * er
            dx = r1[..., None] * er + r[..., None] * ephi
            ddx = (r2 - r)[..., None] * er + (2.0 * r1)[..., None] * ephi
        return x, dx, ddx

    def xy_native(self, phi):
        return self.derivatives_native(phi)[0]

    def speed_native(self, phi):
        dx = self.derivatives_native(phi)[1]
        return np.hypot(dx[..., 0], dx[..., 1])

    def tangent_angle_native(self, phi):
        phi = np.asarray(phi, dtype=float)
        dx = self.derivatives_native(phi)[1]
        c, s = np.cos(phi), np.sin(phi)
        radial = dx[..., 0] * c + dx[..., 1] * s
        azimuthal = -dx[..., 0] * s + dx[..., 1] * c
        # azimuthal > 0 for every supported (star-shaped) descriptor
        return phi + np.arctan2(azimuthal, radial)

    def curvature_native(self, phi):
        _, dx, ddx = self.derivatives_native(phi)
        sp = np.hypot(dx[..., 0], dx[..., 1])
        return (dx[..., 0] * ddx[..., 1] - dx[..., 1] * ddx[..., 0]) / sp**3

    # arc length ------------------------------------------------------------

    def t_of_phi(self, phi):
        """Arc length measured from ``phi = 0``; not reduced mod ``length``."""
        phi = np.asarray(phi, dtype=float)
        t = self._c0 * phi
        if self._modes.size:
            powers = _harmonics(phi, self._modes.size)
            t = t + (powers.imag @ self._sa + (1.0 - powers.real) @ self._sb)
        return t

    def phi_of_t(self, t):
        """Native parameter at arc length ``t`` (lifted: ``t + length`` maps to ``phi + 2 pi``)."""
        t = np.asarray(t, dtype=float)
        turns = np.floor(t / self.length)
        tr = t - turns * self.length
        phi = np.interp(tr, self._t_knots, self._phi_knots)
        if self._modes.size:
            for _ in range(2):
                phi = phi - (self.t_of_phi(phi) - tr) / self.speed_native(phi)
        else:
            phi = tr / self._c0
        return phi + TWO_PI * turns

    def reduce(self, t):
        """Reduce arc length into ``[0, length)``."""
        r = np.mod(t, self.length)
        if np.ndim(r) == 0:
            r = float(r)
            return 0.0 if r >= self.length else r
        return np.where(r >= self.length, 0.0, r)

    def wrap_difference(self, dt):
        """Signed arc-length difference folded into ``[-length/2, length/2)``."""
        half = 0.5 * self.length
        return np.mod(np.asarray(dt) + half, self.length) - half

    # public geometry ----------------------------------------------------------

    def position(self, t):
        return self.xy_native(self.phi_of_t(t))

    def tangent(self, t):
        dx = self.derivatives_native(self.phi_of_t(t))[1]
        return dx / np.hypot(dx[..., 0], dx[..., 1])[..., None]

    def tangent_angle(self, t):
        return self.tangent_angle_native(self.phi_of_t(t))

    def curvature(self, t):
        return self.curvature_native(self.phi_of_t(t))

    # construction checks -----------------------------------------------------

    def _check_shape(self, curvature_bound):
        phi = np.linspace(0.0, TWO_PI, CHECK_SAMPLES, endpoint=False)
        k = self.curvature_native(phi)
        if not np.all(np.isfinite(k)) or np.max(np.abs(k)) * self.length / TWO_PI > curvature_bound:
            raise NonSmooth(f"curvature magnitude {np.max(np.abs(k)):.3g} exceeds the configured bound")
        if self.kind != "fourier":
            return
        t = np.arange(CHECK_SAMPLES) * (self.length / CHECK_SAMPLES)
        pts = self.position(t)
        pairs = cKDTree(pts).query_pairs(self.length * 1e-4, output_type="ndarray")
        if len(pairs):
            gap = np.abs(pairs[:, 0] - pairs[:, 1]) * (self.length / CHECK_SAMPLES)
            gap = np.minimum(gap, self.length - gap)
            if np.any(gap > self.length / 100):
                raise SelfIntersecting("two distant boundary samples nearly coincide")

    def __repr__(self):
        return f"BoundaryCurve({self.descriptor!r}, length={self.length:.12g})"


def build_curve(descriptor: dict, **kwargs) -> BoundaryCurve:
    return BoundaryCurve(descriptor, **kwargs)


def circle(R: float = 1.0) -> BoundaryCurve:
    return BoundaryCurve({"kind": "circle", "R": R})


def ellipse(a: float, b: float) -> BoundaryCurve:
    return BoundaryCurve({"kind": "ellipse", "a": a, "b": b})


def fourier(r0: float, cos=(), sin=()) -> BoundaryCurve:
    return BoundaryCurve({"kind": "fourier", "r0": r0, "cos": list(cos), "sin": list(sin)})


def position(curve: BoundaryCurve, t):
    return curve.position(t)


def curvature(curve: BoundaryCurve, t):
    return curve.curvature(t)


def tangent_angle(curve: BoundaryCurve, t):
    return curve.tangent_angle(t)
