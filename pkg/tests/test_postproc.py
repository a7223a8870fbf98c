import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.sparse.csgraph import connected_components

from rfulm.postproc import (BMODE, RF, LocalizationSet, dbscan_fuse, extract_points,
                            gmeans_threshold, nms, to_bmode)
from rfulm.transform import AffineMap


def brute_nms(h, w):
    r = w // 2
    H, W = h.shape
    out = np.zeros_like(h)
    for i in range(H):
        for j in range(W):
            best = None
            for a in range(max(0, i - r), min(H, i + r + 1)):
                for b in range(max(0, j - r), min(W, j + r + 1)):
                    if best is None or h[a, b] > h[best]:
                        best = (a, b)
            if best == (i, j):
                out[i, j] = h[i, j]
    return out


def test_nms_single_peak_and_plateau():
    h = np.zeros((5, 5))
    h[2, 3] = 7.0
    np.testing.assert_array_equal(nms(h), h)
    flat = np.ones((3, 3))
    out = nms(flat)
    assert out[0, 0] == 1.0 and np.count_nonzero(out) == 1
    with pytest.raises(ValueError):
        nms(h, 4)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([3, 5]), st.booleans())
def test_nms_matches_brute_force(seed, w, quantise):
    rng = np.random.default_rng(seed)
    h = rng.normal(size=(9, 11))
    if quantise:
        h = np.round(h * 2) / 2  # plenty of ties
    np.testing.assert_array_equal(nms(h, w), brute_nms(h, w))


def test_extract_points_rescales_and_thresholds():
    peaks = np.zeros((16, 8))
    peaks[6, 2] = 5.0
    peaks[10, 4] = 1.0
    s = extract_points(peaks, 2.0, 2, tx_angle=0.1, frame_index=3)
    assert s.space == RF and s.frame_index == 3
    np.testing.assert_array_equal(s.coords, [[1.0, 3.0]])
    np.testing.assert_array_equal(s.scores, [5.0])
    assert s.tx_angles.tolist() == [0.1]
    assert len(extract_points(peaks, math.inf, 2)) == 0
    assert len(extract_points(peaks, 0.5, 2)) == 2


def test_to_bmode_uses_angle_specific_maps():
    m0 = AffineMap.from_coefficients([1, 0, 10, 0, 1, 0], tx_angle=0.0)
    m5 = AffineMap.from_coefficients([1, 0, -10, 0, 1, 0], tx_angle=math.radians(5))
    s = LocalizationSet([[1.0, 2.0], [1.0, 2.0]], [1, 1], RF, [0.0, math.radians(5)])
    b = to_bmode(s, [m0, m5])
    assert b.space == BMODE
    np.testing.assert_array_equal(b.coords, [[11.0, 2.0], [-9.0, 2.0]])
    with pytest.raises(KeyError):
        to_bmode(s, [m0])
    with pytest.raises(ValueError):
        to_bmode(b, [m0, m5])


def test_dbscan_fuses_close_points():
    s = LocalizationSet([[0.0, 5.0], [0.2, 5.0], [3.0, 8.0]], [1.0, 3.0, 2.0], BMODE,
                        [0.0, 0.1, 0.0], frame_index=2)
    f = dbscan_fuse(s, eps=0.5)
    assert len(f) == 2 and f.frame_index == 2
    order = np.argsort(f.coords[:, 0])
    np.testing.assert_allclose(f.coords[order], [[0.15, 5.0], [3.0, 8.0]])
    np.testing.assert_allclose(f.scores[order], [4.0, 2.0])
    assert len(dbscan_fuse(LocalizationSet(space=BMODE))) == 0
    with pytest.raises(ValueError):
        dbscan_fuse(LocalizationSet([[0, 0]], [1], RF))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 25))
def test_dbscan_matches_eps_graph_components(seed, n):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 4, (n, 2))
    s = LocalizationSet(pts, np.ones(n), BMODE)
    f = dbscan_fuse(s, eps=0.5)
    d = np.linalg.norm(pts[:, None] - pts[None], axis=2)
    k, lab = connected_components(d <= 0.5, directed=False)
    assert len(f) == k
    ref = np.array([pts[lab == c].mean(axis=0) for c in range(k)])
    key = lambda a: a[np.lexsort((a[:, 1], a[:, 0]))]  # noqa: E731
    np.testing.assert_allclose(key(f.coords), key(ref), atol=1e-12)
    assert f.scores.sum() == pytest.approx(n)


def test_gmeans_separable():
    thr, g = gmeans_threshold([0.1, 0.2, 0.3, 0.9, 1.0, 1.2], [0, 0, 0, 1, 1, 1])
    assert g == 1.0
    # ties resolve to the largest threshold that keeps every positive
    assert thr == 0.9


def test_gmeans_overlapping():
    scores = [1, 2, 3, 4, 5, 6]
    hits = [0, 1, 0, 1, 0, 1]
    thr, g = gmeans_threshold(scores, hits)
    # exhaustive reference over all cut points
    best = max(math.sqrt(sum(h and s >= t for s, h in zip(scores, hits)) / 3
                         * (1 - sum((not h) and s >= t for s, h in zip(scores, hits)) / 3))
               for t in scores)
    assert g == pytest.approx(best)
    with pytest.raises(ValueError):
        gmeans_threshold([1, 2], [1, 1])


def test_localization_set_validation():
    with pytest.raises(ValueError):
        LocalizationSet([[0, 0], [1, 1]], [1.0], RF)
    with pytest.raises(ValueError):
        LocalizationSet(space="polar")
    c = LocalizationSet.concat([LocalizationSet([[0, 0]], [1], RF, [0.1]),
                                LocalizationSet([[1, 1]], [2], RF, [0.2])])
    assert len(c) == 2 and c.tx_angles.tolist() == [0.1, 0.2]
    with pytest.raises(ValueError):
        LocalizationSet.concat([LocalizationSet(space=RF), LocalizationSet(space=BMODE)])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_nms_idempotent_on_non_negative_maps(seed):
    # suppressed pixels become 0, which would outrank a negative peak on a second pass
    h = np.abs(np.round(np.random.default_rng(seed).normal(size=(12, 10)), 1))
    once = nms(h)
    np.testing.assert_array_equal(nms(once), once)


def test_extract_points_examples():
    peaks = np.zeros((64, 32))
    peaks[40, 12] = 3.0
    s = extract_points(peaks, 1.0, 4)
    # upsampled (row 40, col 12) -> sample 10, channel 3; coords are (channel, sample)
    np.testing.assert_array_equal(s.coords, [[3.0, 10.0]])
    assert len(extract_points(np.zeros((8, 8)), 0.0, 2)) == 0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 4), st.floats(0.0, 2.0), st.floats(0.0, 2.0))
def test_extract_points_scaling_and_monotone(seed, c, t1, t2):
    rng = np.random.default_rng(seed)
    peaks = nms(rng.random((10, 8)))
    big = np.zeros((10 * c, 8 * c))
    big[::c, ::c] = peaks
    a = extract_points(peaks, 0.5, 2)
    b = extract_points(big, 0.5, 2 * c)
    np.testing.assert_allclose(np.sort(b.coords, axis=0), np.sort(a.coords, axis=0))
    lo, hi = sorted((t1, t2))
    assert len(extract_points(peaks, hi, 2)) <= len(extract_points(peaks, lo, 2))


def test_gmeans_examples():
    # best cut keeps 9 of 10 positives and 1 of 10 negatives
    scores = [0.1] + [0.9] * 9 + [0.2] * 9 + [0.95]
    hits = [1] * 10 + [0] * 10
    _, g = gmeans_threshold(scores, hits)
    assert g == pytest.approx(0.9)


def brute_gmeans(scores, hits):
    scores, hits = np.asarray(scores, float), np.asarray(hits, bool)
    best = (-1.0, None)
    for t in np.unique(scores):
        keep = scores >= t
        g = math.sqrt(keep[hits].mean() * (1 - keep[~hits].mean()))
        if g >= best[0]:
            best = (g, t)
    return best


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.booleans())
def test_gmeans_matches_sweep(seed, swap):
    rng = np.random.default_rng(seed)
    hits = np.r_[np.ones(8, bool), np.zeros(8, bool)]
    scores = np.round(rng.normal(size=16) + 1.5 * hits, 1)
    if swap:
        hits = ~hits
    thr, g = gmeans_threshold(scores, hits)
    g_ref, t_ref = brute_gmeans(scores, hits)
    assert g == pytest.approx(g_ref, abs=1e-12)
    # the chosen threshold accepts exactly the same candidates as the sweep optimum
    np.testing.assert_array_equal(scores >= thr, scores >= t_ref)


def test_to_bmode_identity_and_empty():
    m = AffineMap(tx_angle=0.0)
    s = LocalizationSet([[3.0, 10.0]], [1.0], RF, [0.0])
    b = to_bmode(s, [m])
    assert b.space == BMODE
    np.testing.assert_array_equal(b.coords, s.coords)
    assert len(to_bmode(LocalizationSet(space=RF), [m])) == 0


def test_dbscan_examples():
    one = dbscan_fuse(LocalizationSet([[1.0, 6.0]], [2.0], BMODE))
    np.testing.assert_array_equal(one.coords, [[1.0, 6.0]])
    near = dbscan_fuse(LocalizationSet([[0.0, 6.0], [0.3, 6.0]], [1.0, 1.0], BMODE))
    np.testing.assert_allclose(near.coords, [[0.15, 6.0]])
    far = dbscan_fuse(LocalizationSet([[0.0, 6.0], [0.8, 6.0]], [1.0, 1.0], BMODE))
    assert len(far) == 2


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_dbscan_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 3, (15, 2))
    perm = rng.permutation(15)
    a = dbscan_fuse(LocalizationSet(pts, np.ones(15), BMODE))
    b = dbscan_fuse(LocalizationSet(pts[perm], np.ones(15), BMODE))
    key = lambda x: x[np.lexsort((x[:, 1], x[:, 0]))]  # noqa: E731
    np.testing.assert_allclose(key(a.coords), key(b.coords), atol=1e-12)
    assert a.scores.sum() == 15
