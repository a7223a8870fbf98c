"""Weighted-average localization on beamformed envelope images."""

import numpy as np

from ..postproc import BMODE, LocalizationSet, nms


def weighted_average_baseline(img, window=3, threshold=0.0, grid=None, frame_index=0):
    """Local maxima above ``threshold`` refined by their intensity-weighted centroid.

    ``img`` is an envelope array or a :class:`~rfulm.signal.BmodeImage`. With a
    grid the result is in wavelengths, otherwise in (col, row) pixel units.
    """
    if hasattr(img, "grid"):
        grid = img.grid if grid is None else grid
        env = img.envelope
    else:
        env = np.abs(np.asarray(img, dtype=float))
    H, W = env.shape
    if env.size == 0 or not np.any(env > 0):
        return LocalizationSet(space=BMODE, frame_index=frame_index)
    peaks = nms(env, window)
    rows, cols = np.nonzero(peaks)
    vals = env[rows, cols]
    sel = vals > threshold
    rows, cols, vals = rows[sel], cols[sel], vals[sel]
    r = window // 2
    ref_r, ref_c = [], []
    for i, j in zip(rows, cols):
        a0, a1 = max(i - r, 0), min(i + r + 1, H)
        b0, b1 = max(j - r, 0), min(j + r + 1, W)
        patch = env[a0:a1, b0:b1]
        w = patch.sum()
        ii, jj = np.mgrid[a0:a1, b0:b1]
        ref_r.append((patch * ii).sum() / w)
        ref_c.append((patch * jj).sum() / w)
    ref_r, ref_c = np.array(ref_r, float), np.array(ref_c, float)
    if grid is not None:
        coords = grid.index_to_wl(ref_r, ref_c)
    else:
        coords = np.column_stack([ref_c, ref_r])
    return LocalizationSet(coords, vals, BMODE, np.full(len(vals), np.nan), frame_index)
