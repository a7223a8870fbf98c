"""Accumulate localizations into a super-resolved ULM image."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image


@dataclass(eq=False)
class UlmCanvas:
    """Count grid covering ``lateral_range`` x ``axial_range`` (wavelengths).

    ``pixel`` is the B-mode pixel size; bins are ``pixel / upsample`` wide.
    """

    lateral_range: tuple
    axial_range: tuple
    pixel: float = 1.0
    upsample: int = 10
    counts: np.ndarray = None
    dropped: int = 0

    def __post_init__(self):
        if self.pixel <= 0 or self.upsample < 1:
            raise ValueError("pixel size and upsample factor must be positive")
        if self.counts is None:
            self.counts = np.zeros(self.shape, dtype=np.int64)

    @property
    def bin_size(self):
        return self.pixel / self.upsample

    @property
    def shape(self):
        b = self.bin_size
        w = int(np.ceil((self.lateral_range[1] - self.lateral_range[0]) / b - 1e-9))
        h = int(np.ceil((self.axial_range[1] - self.axial_range[0]) / b - 1e-9))
        return (max(h, 1), max(w, 1))

    @property
    def total(self):
        return int(self.counts.sum())

    def merge(self, other):
        if self.counts.shape != other.counts.shape:
            raise ValueError("canvas shapes differ")
        self.counts += other.counts
        self.dropped += other.dropped
        return self


def dither(p, pixel, seed=None, rng=None):
    """Add uniform offsets in [-pixel/4, pixel/4] per axis; ``pixel == 0`` disables it.

    ``p`` is one point or an (N, 2) array; ``pixel`` a scalar or per-axis pair.
    """
    pts = np.asarray(p, dtype=float)
    pix = np.broadcast_to(np.asarray(pixel, dtype=float), (2,))
    if not np.any(pix):
        return pts.copy()
    if np.any(pix < 0):
        raise ValueError("pixel size must be non-negative")
    rng = rng if rng is not None else np.random.default_rng(seed)
    off = rng.uniform(-0.25, 0.25, size=pts.shape) * pix
    return pts + off


def accumulate(points, canvas, dither_pixel=0.0, seed=0):
    """Increment one bin per (optionally dithered) point; out-of-canvas points are counted as dropped."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        return canvas
    pts = dither(pts, dither_pixel, seed)
    b = canvas.bin_size
    col = np.floor((pts[:, 0] - canvas.lateral_range[0]) / b).astype(np.int64)
    row = np.floor((pts[:, 1] - canvas.axial_range[0]) / b).astype(np.int64)
    H, W = canvas.counts.shape
    ok = (row >= 0) & (row < H) & (col >= 0) & (col < W)
    np.add.at(canvas.counts, (row[ok], col[ok]), 1)
    canvas.dropped += int((~ok).sum())
    return canvas


def tone_map(counts, gamma=1.0):
    """Counts normalised to [0, 1] by the maximum, then raised to ``gamma``."""
    c = np.asarray(counts, dtype=float)
    peak = c.max() if c.size else 0.0
    if peak <= 0:
        return np.zeros_like(c)
    return (c / peak) ** gamma


def export_image(canvas, gamma=1.0, path=None, fmt="png"):
    """Write a 16-bit grayscale PNG (or binary PGM with ``fmt='pgm'``)."""
    counts = canvas.counts if isinstance(canvas, UlmCanvas) else canvas
    levels = np.rint(tone_map(counts, gamma) * 65535.0).astype(np.uint16)
    if fmt == "pgm":
        H, W = levels.shape
        with open(path, "wb") as fh:
            fh.write(f"P5\n{W} {H}\n65535\n".encode("ascii"))
            fh.write(levels.astype(">u2").tobytes())
    else:
        Image.fromarray(levels).save(path, format="PNG")
    return levels
