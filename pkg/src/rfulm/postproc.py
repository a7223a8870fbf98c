"""Heatmap-to-localization post-processing.

NMS peaks on the upsampled grid are thresholded, rescaled to RF units, mapped
to B-mode space with the per-angle affine map and fused across transmit
angles with DBSCAN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.cluster import DBSCAN

from . import kernels

RF = "rf"
BMODE = "bmode"


@dataclass(frozen=True, eq=False)
class LocalizationSet:
    """Detected points of one frame.

    ``coords`` is (N, 2): ``(channel, sample)`` in RF space or
    ``(lateral, axial)`` wavelengths in B-mode space.
    """

    coords: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    scores: np.ndarray = field(default_factory=lambda: np.zeros(0))
    space: str = RF
    tx_angles: np.ndarray = field(default_factory=lambda: np.zeros(0))
    frame_index: int = 0
    wavelength: float = 1.0

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float).reshape(-1, 2)
        s = np.asarray(self.scores, dtype=float).reshape(-1)
        a = np.asarray(self.tx_angles, dtype=float).reshape(-1)
        if a.size == 1 and c.shape[0] != 1:
            a = np.full(c.shape[0], a[0])
        if a.size == 0 and c.shape[0]:
            a = np.zeros(c.shape[0])
        if not (c.shape[0] == s.size == a.size):
            raise ValueError("coords, scores and angles must have equal length")
        if self.space not in (RF, BMODE):
            raise ValueError(f"unknown coordinate space {self.space!r}")
        object.__setattr__(self, "coords", c)
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "tx_angles", a)

    def __len__(self):
        return self.coords.shape[0]

    @classmethod
    def concat(cls, sets, **kw):
        sets = list(sets)
        if not sets:
            return cls(**kw)
        spaces = {s.space for s in sets}
        if len(spaces) > 1:
            raise ValueError("cannot mix RF and B-mode localizations")
        base = dict(space=sets[0].space, frame_index=sets[0].frame_index,
                    wavelength=sets[0].wavelength)
        base.update(kw)
        return cls(np.concatenate([s.coords for s in sets]),
                   np.concatenate([s.scores for s in sets]),
                   tx_angles=np.concatenate([s.tx_angles for s in sets]), **base)


def nms(heatmap, window=3):
    """Zero every pixel that is not the maximum of its ``window`` x ``window`` neighbourhood.

    Equal values inside a window resolve to the first pixel in row-major order.
    """
    if window < 3 or window % 2 == 0:
        raise ValueError("NMS window must be odd and >= 3")
    h = np.ascontiguousarray(heatmap, dtype=float)
    keep = kernels.nms(h, int(window))
    return np.where(keep, h, 0.0)


def peak_candidates(peaks):
    """Row/column indices and values of the non-zero entries of an NMS map."""
    rows, cols = np.nonzero(peaks)
    return rows, cols, peaks[rows, cols]


def extract_points(peaks, threshold, R, tx_angle=0.0, frame_index=0):
    """Thresholded NMS peaks as RF-space localizations.

    Upsampled ``(row, col)`` = ``(sample * R, channel * R)`` is divided by R.
    """
    if R < 1:
        raise ValueError("upsample factor must be >= 1")
    rows, cols, vals = peak_candidates(peaks)
    sel = vals >= threshold
    coords = np.column_stack([cols[sel] / R, rows[sel] / R]).astype(float)
    return LocalizationSet(coords, vals[sel], RF, np.full(int(sel.sum()), tx_angle), frame_index)


def drop_out_of_aperture(s, g):
    from .geometry import in_aperture_mask

    if len(s) == 0:
        return s
    ok = in_aperture_mask(s.coords, g)
    return replace(s, coords=s.coords[ok], scores=s.scores[ok], tx_angles=s.tx_angles[ok])


def _angle_key(a):
    return round(math.degrees(a), 6)


def to_bmode(s, maps):
    """Apply the affine map matching each point's transmit angle."""
    if s.space != RF:
        raise ValueError("to_bmode expects RF-space localizations")
    lookup = {_angle_key(m.tx_angle): m for m in maps}
    out = np.zeros_like(s.coords)
    for key in {_angle_key(a) for a in s.tx_angles}:
        if key not in lookup:
            raise KeyError(f"no affine map for transmit angle {key} deg")
        idx = np.array([_angle_key(a) == key for a in s.tx_angles])
        out[idx] = lookup[key].apply(s.coords[idx])
    return replace(s, coords=out, space=BMODE)


def dbscan_fuse(s, eps=0.5, min_samples=1):
    """Fuse localizations of one frame across transmit angles.

    ``eps`` is in wavelengths. Every cluster becomes its score-weighted
    centroid carrying the summed score.
    """
    if s.space != BMODE:
        raise ValueError("fusion runs in B-mode space")
    n = len(s)
    if n == 0:
        return s
    labels = DBSCAN(eps=eps, min_samples=min_samples).fit(s.coords).labels_
    coords, scores = [], []
    for lab in np.unique(labels[labels >= 0]):
        idx = labels == lab
        w = s.scores[idx]
        total = float(w.sum())
        if total > 0:
            c = (s.coords[idx] * w[:, None]).sum(axis=0) / total
        else:
            c = s.coords[idx].mean(axis=0)
        coords.append(c)
        scores.append(total)
    coords = np.array(coords).reshape(-1, 2)
    return LocalizationSet(coords, np.array(scores), BMODE, np.full(len(scores), np.nan),
                           s.frame_index, s.wavelength)


def gmeans_threshold(scores, hits):
    """Threshold maximising sqrt(TPR * (1 - FPR)) over candidate peaks.

    ``hits`` flags candidates that matched a ground-truth point. Candidates
    are the distinct scores and the midpoints between neighbours; a point is
    accepted when ``score >= threshold``. Ties go to the larger threshold.
    Returns ``(threshold, g_mean)``.
    """
    scores = np.asarray(scores, dtype=float)
    hits = np.asarray(hits, dtype=bool)
    n_pos, n_neg = int(hits.sum()), int((~hits).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("G-means needs both matched and unmatched candidates")
    uniq = np.unique(scores)
    cands = np.concatenate([uniq, (uniq[:-1] + uniq[1:]) / 2.0])
    cands = np.sort(cands)[::-1]
    pos = np.sort(scores[hits])
    neg = np.sort(scores[~hits])
    tpr = (n_pos - np.searchsorted(pos, cands, side="left")) / n_pos
    fpr = (n_neg - np.searchsorted(neg, cands, side="left")) / n_neg
    g = np.sqrt(tpr * (1.0 - fpr))
    best = int(np.argmax(g))  # first max in descending order = largest threshold
    return float(cands[best]), float(g[best])
