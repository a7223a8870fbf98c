"""Inverse point mapping from RF space back to B-mode space.

The map is a 2-D affine transform per transmit angle, fitted once on synthetic
calibration points by Levenberg-Marquardt least squares. Because the objective
is linear in the six coefficients, a closed-form solve is kept alongside as an
independent check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import apex_points, in_aperture_mask


class FitError(RuntimeError):
    """Affine fit failed; carries the last iterate when one exists."""

    def __init__(self, message, coefficients=None, residual=None, angle=None):
        super().__init__(message)
        self.coefficients = coefficients
        self.residual = residual
        self.angle = angle


@dataclass(frozen=True)
class AffineMap:
    a11: float = 1.0
    a12: float = 0.0
    a13: float = 0.0
    a21: float = 0.0
    a22: float = 1.0
    a23: float = 0.0
    tx_angle: float = 0.0
    fit_residual_rms: float = float("nan")

    @classmethod
    def from_coefficients(cls, a, **kw):
        return cls(*(float(v) for v in a), **kw)

    @property
    def coefficients(self):
        return np.array([self.a11, self.a12, self.a13, self.a21, self.a22, self.a23])

    @property
    def matrix(self):
        return np.array([[self.a11, self.a12, self.a13],
                         [self.a21, self.a22, self.a23],
                         [0.0, 0.0, 1.0]])

    @property
    def det(self):
        return self.a11 * self.a22 - self.a12 * self.a21

    def apply(self, pts):
        """Map (N, 2) RF points to (N, 2) B-mode points."""
        p = np.atleast_2d(np.asarray(pts, dtype=float))
        if p.size == 0:
            return np.zeros((0, 2))
        y = self.a11 * p[:, 0] + self.a12 * p[:, 1] + self.a13
        z = self.a21 * p[:, 0] + self.a22 * p[:, 1] + self.a23
        return np.column_stack([y, z])


@dataclass(frozen=True, eq=False)
class CalibrationSet:
    bmode: np.ndarray   # (N, 2) wavelengths
    rf: np.ndarray      # (N, 2) channel, sample
    rng_seed: int | None = None
    tx_angle: float = 0.0

    def __post_init__(self):
        if self.bmode.shape != self.rf.shape or self.bmode.ndim != 2 or self.bmode.shape[1] != 2:
            raise ValueError("calibration pairs must be index-aligned (N, 2) arrays")

    def __len__(self):
        return self.bmode.shape[0]


@dataclass
class LMOptions:
    max_iter: int = 200
    step_tol: float = 1e-10
    damping_init: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 10.0


def default_region(g, z_min_wl, z_max_wl, lateral_margin_wl=None):
    """Calibration region: the aperture less one pitch on each side, axial [z_min+2, z_max-2]."""
    half = g.to_wavelengths(g.aperture) / 2.0
    margin = g.to_wavelengths(g.pitch) if lateral_margin_wl is None else lateral_margin_wl
    return (-half + margin, half - margin), (z_min_wl + 2.0, z_max_wl - 2.0)


def gen_calibration_points(g, region, n=1000, seed=0):
    """Uniform random B-mode points and their in-aperture RF apex labels.

    ``region`` is ``((lat_min, lat_max), (ax_min, ax_max))`` in wavelengths.
    Out-of-aperture draws are discarded and redrawn, up to ``100 * n`` draws.
    """
    if n < 50:
        raise ValueError("calibration needs n >= 50 points")
    (y0, y1), (z0, z1) = region
    if not (y1 > y0 and z1 > z0 and z0 >= 0):
        raise ValueError(f"invalid calibration region {region}")
    rng = np.random.default_rng(seed)
    kept_b, kept_r = [], []
    have = drawn = 0
    while have < n:
        if drawn >= 100 * n:
            raise FitError(f"only {have} of {n} calibration points fall inside the aperture "
                           f"after {drawn} draws", angle=g.tx_angle)
        m = n - have
        pts = np.column_stack([rng.uniform(y0, y1, m), rng.uniform(z0, z1, m)])
        drawn += m
        rf = apex_points(pts, g)
        ok = in_aperture_mask(rf, g)
        kept_b.append(pts[ok])
        kept_r.append(rf[ok])
        have += int(ok.sum())
    return CalibrationSet(np.concatenate(kept_b)[:n], np.concatenate(kept_r)[:n], seed, g.tx_angle)


def _design(rf):
    """Jacobian of the stacked residual [y-res; z-res] w.r.t. the six coefficients."""
    n = rf.shape[0]
    J = np.zeros((2 * n, 6))
    J[:n, 0] = rf[:, 0]
    J[:n, 1] = rf[:, 1]
    J[:n, 2] = 1.0
    J[n:, 3] = rf[:, 0]
    J[n:, 4] = rf[:, 1]
    J[n:, 5] = 1.0
    return J


def _check_nondegenerate(c):
    if len(c) < 6:
        raise FitError(f"need at least 6 pairs, got {len(c)}", angle=c.tx_angle)
    centred = c.rf - c.rf.mean(axis=0)
    s = np.linalg.svd(centred, compute_uv=False)
    if s[-1] <= 1e-12 * max(s[0], 1.0):
        raise FitError("calibration points are collinear; normal equations are singular",
                       angle=c.tx_angle)


def residual_vector(a, c):
    pred = AffineMap.from_coefficients(a).apply(c.rf)
    return np.concatenate([pred[:, 0] - c.bmode[:, 0], pred[:, 1] - c.bmode[:, 1]])


def sum_squared_residual(a, c):
    r = residual_vector(a, c)
    return float(r @ r)


def _finish(a, c):
    r = residual_vector(a, c)
    rms = math.sqrt(float(r @ r) / len(c))
    m = AffineMap.from_coefficients(a, tx_angle=c.tx_angle, fit_residual_rms=rms)
    if abs(m.det) <= 1e-12:
        raise FitError("fitted linear block is singular", a, rms, c.tx_angle)
    return m


def fit_affine_normal(c):
    """Closed-form least-squares affine fit via an orthogonal decomposition."""
    _check_nondegenerate(c)
    X = np.column_stack([c.rf, np.ones(len(c))])
    coef, *_ = np.linalg.lstsq(X, c.bmode, rcond=None)
    a = np.concatenate([coef[:, 0], coef[:, 1]])
    return _finish(a, c)


def fit_affine_lm(c, init=None, opts=None):
    """Levenberg-Marquardt fit of the affine coefficients.

    Starts from ``init`` (identity when None) and uses the Marquardt damping
    schedule ``mu = damping_init * trace(J^T J) / 6``, multiplied on rejected
    steps and divided on accepted ones. Each damped step is solved as the
    augmented least-squares problem ``[J; sqrt(mu) I] step = [-r; 0]``, which
    avoids squaring the condition number of J. Stops when the step norm drops
    below ``opts.step_tol``.
    """
    opts = opts or LMOptions()
    _check_nondegenerate(c)
    a = (init.coefficients if init is not None else AffineMap().coefficients).astype(float)
    J = _design(c.rf)
    JtJ = J.T @ J
    mu = opts.damping_init * np.trace(JtJ) / 6.0
    r = residual_vector(a, c)
    cost = float(r @ r)
    eye = np.eye(6)
    zeros = np.zeros(6)
    for _ in range(opts.max_iter):
        while True:
            aug = np.vstack([J, math.sqrt(mu) * eye])
            step = np.linalg.lstsq(aug, np.concatenate([-r, zeros]), rcond=None)[0]
            a_new = a + step
            r_new = residual_vector(a_new, c)
            # The residual is affine in a, so r_new - r == J step exactly. Using
            # J step avoids the round-off of re-evaluated residuals, which
            # otherwise hides the last digits of descent near the optimum.
            js = J @ step
            decrease = -float(js @ (2.0 * r + js))
            if decrease >= 0.0:
                a, r = a_new, r_new
                cost = float(r @ r)
                mu /= opts.damping_down
                break
            mu *= opts.damping_up
            if not np.isfinite(mu) or mu > 1e30:
                # no descent possible at any damping: stationary point reached
                return _finish(a, c)
        if np.linalg.norm(step) < opts.step_tol * (1.0 + np.linalg.norm(a)):
            return _finish(a, c)
    raise FitError(f"Levenberg-Marquardt did not converge in {opts.max_iter} iterations",
                   a, math.sqrt(cost / len(c)), c.tx_angle)


def apply_affine(m, p):
    """Map one RF label to a B-mode point via the homogeneous product."""
    from .geometry import BmodePoint

    v = m.matrix @ np.array([p.channel, p.sample, 1.0])
    return BmodePoint(float(v[0]), float(v[1]))


def fit_per_angle(g, angles, region, n=1000, seed=0, method="lm"):
    """One fitted :class:`AffineMap` per transmit angle (radians)."""
    if len(angles) == 0:
        raise ValueError("need at least one transmit angle")
    maps = []
    for ang in angles:
        ga = g.steered(ang)
        try:
            cset = gen_calibration_points(ga, region, n, seed)
            init = fit_affine_normal(cset)
            m = fit_affine_lm(cset, init) if method == "lm" else init
        except FitError as exc:
            exc.angle = ang
            raise FitError(f"angle {math.degrees(ang):g} deg: {exc}", exc.coefficients,
                           exc.residual, ang) from exc
        maps.append(m)
    return maps
