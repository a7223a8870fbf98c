"""Gaussian heatmap targets and the training loss."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

PEAK_AMPLITUDE = 120.0


def gaussian_kernel(sigma):
    """Normalised 2-D Gaussian truncated at radius ceil(3 sigma)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    r = max(1, int(math.ceil(3.0 * sigma)))
    x = np.arange(-r, r + 1, dtype=float)
    k1 = np.exp(-x ** 2 / (2.0 * sigma ** 2))
    k = np.outer(k1, k1)
    return k / k.sum()


@dataclass(frozen=True, eq=False)
class TargetMask:
    values: np.ndarray   # (R*U, R*V), amplified blurred mask
    mask: np.ndarray     # (R*U, R*V) binary
    R: int
    sigma: float
    lambda0: float


def label_pixels(labels, R, shape):
    """Upsampled ``(row, col)`` of RF labels; nearest integer, ties to even."""
    lab = np.asarray(labels, dtype=float).reshape(-1, 2)
    rows = np.rint(R * lab[:, 1]).astype(int)
    cols = np.rint(R * lab[:, 0]).astype(int)
    U, V = shape
    ok = (rows >= 0) & (rows < R * U) & (cols >= 0) & (cols < R * V)
    return rows[ok], cols[ok]


def build_target(labels, R, sigma, shape):
    """Amplified target ``lambda0 * (G_sigma * Y)`` for ``(channel, sample)`` labels.

    ``lambda0 = 120 / max(G_sigma * Y)``, so the peak pixel is exactly 120.
    Coincident labels collapse onto one pixel. Without labels the target is
    zero and ``lambda0`` is 1.
    """
    U, V = shape
    Y = np.zeros((R * U, R * V))
    rows, cols = label_pixels(labels, R, shape)
    Y[rows, cols] = 1.0
    if not Y.any():
        return TargetMask(Y.copy(), Y, R, sigma, 1.0)
    blurred = ndimage.convolve(Y, gaussian_kernel(sigma), mode="constant")
    peak = blurred.max()
    # normalising first makes the maximum exactly 1 before amplification
    values = PEAK_AMPLITUDE * (blurred / peak)
    return TargetMask(values, Y, R, sigma, PEAK_AMPLITUDE / peak)


def loss(pred, target, lambda1):
    """Squared L2 error to the amplified target plus ``lambda1`` times the L1 norm of pred."""
    t = getattr(target, "values", target)
    pred = np.asarray(pred)
    t = np.asarray(t)
    if pred.shape != t.shape:
        raise ValueError(f"shape mismatch: prediction {pred.shape} vs target {t.shape}")
    diff = pred - t
    return float(np.sum(diff * diff) + lambda1 * np.sum(np.abs(pred)))


def loss_grad(pred, target, lambda1):
    """Derivative of :func:`loss` with respect to ``pred``."""
    t = getattr(target, "values", target)
    return 2.0 * (pred - t) + lambda1 * np.sign(pred)
