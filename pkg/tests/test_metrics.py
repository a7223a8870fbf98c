import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rfulm.metrics import (MatchResult, StageTimer, evaluate, jaccard, match_points,
                           match_ranked, metrics_table, rmse, timing_report)


def test_outside_gate_is_fp_and_fn():
    m = match_points([[0.0, 5.0]], [[0.3, 5.0]])
    assert (m.tp, m.fp, m.fn) == (0, 1, 1)
    assert jaccard(m) == 0.0


def test_gate_is_strict():
    assert match_points([[0.0, 0.0]], [[0.25, 0.0]]).tp == 0
    assert match_points([[0.0, 0.0]], [[0.2499, 0.0]]).tp == 1


def test_jaccard_eighty_percent():
    gt = [[float(i), 0.0] for i in range(5)]
    est = [[float(i) + 0.1, 0.0] for i in range(4)] + [[20.0, 0.0]]
    m = match_points(gt, est)
    assert (m.tp, m.fp, m.fn) == (4, 1, 1)
    assert jaccard(m) == pytest.approx(100 * 4 / 6)
    m2 = match_points(gt[:4] + [[9.0, 9.0]], est[:4])
    assert jaccard(m2) == pytest.approx(80.0)


def test_rmse_in_tenths_of_wavelength():
    m = match_points([[0, 0], [5, 5]], [[0.1, 0], [5, 5.2]])
    s = rmse([m])
    assert s.mean == pytest.approx(10 * math.sqrt((0.01 + 0.04) / 2))
    assert s.std == 0.0
    assert not rmse([match_points([], [[0, 0]])]).defined
    assert math.isnan(jaccard(MatchResult()))


def test_evaluate_identity_and_empty():
    gt = {0: np.array([[1.0, 5.0]]), 1: np.array([[2.0, 6.0], [-3.0, 9.0]])}
    ms = evaluate(gt, gt)
    assert jaccard(ms) == 100.0 and rmse(ms).mean == 0.0
    assert jaccard(evaluate(gt, {})) == 0.0


def test_greedy_prefers_closest_pair():
    m = match_points([[0.0, 0.0], [0.3, 0.0]], [[0.2, 0.0]])
    assert m.pairs == [(1, 0, pytest.approx(0.1))]


def test_match_ranked_score_order():
    gt = [[0.0, 0.0]]
    est = [[0.05, 0.0], [0.2, 0.0]]
    assert match_ranked(gt, est, [1.0, 5.0]).tolist() == [False, True]
    assert match_ranked(gt, est, [5.0, 1.0]).tolist() == [True, False]
    assert match_ranked([], est, [1, 2]).tolist() == [False, False]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(0, 8), st.integers(0, 8))
def test_matching_counts_are_consistent(seed, ng, ne):
    rng = np.random.default_rng(seed)
    gt = rng.uniform(0, 1, (ng, 2))
    est = rng.uniform(0, 1, (ne, 2))
    m = match_points(gt, est)
    assert m.tp + m.fn == ng and m.tp + m.fp == ne
    assert all(d < 0.25 for d in m.distances)
    assert len({a for a, _, _ in m.pairs}) == m.tp == len({b for _, b, _ in m.pairs})
    hits = match_ranked(gt, est, rng.random(ne))
    assert hits.sum() <= min(ng, ne)


def test_timer_and_tables():
    t = StageTimer()
    with t.stage("a"):
        pass
    with t.stage("a"):
        pass
    t.frames = 2
    rows = t.report()
    assert [r[0] for r in rows] == ["a", "total"]
    assert "per frame" in timing_report(t)
    tab = metrics_table([dict(method="Ours", rmse_mean=1.0, rmse_std=0.5, jaccard=90.0, time=1.0),
                         dict(method="X", rmse_mean=math.nan, rmse_std=math.nan,
                              jaccard=math.nan, time=None)])
    assert "RMSE [lambda/10]" in tab and "Jaccard [%]" in tab
    assert "1.000 +- 0.500" in tab and "undefined" in tab


def test_two_gt_three_estimates_matches_optimal_assignment():
    from itertools import permutations

    gt = np.array([[0.0, 0.0], [2.0, 0.0]])
    est = np.array([[0.1, 0.0], [2.0, 0.15], [5.0, 5.0]])
    m = match_points(gt, est)
    assert (m.tp, m.fp, m.fn) == (2, 1, 0)
    d = np.linalg.norm(gt[:, None] - est[None], axis=2)
    best = min(permutations(range(3), 2), key=lambda p: d[0, p[0]] + d[1, p[1]])
    assert sorted((a, b) for a, b, _ in m.pairs) == [(0, best[0]), (1, best[1])]


def test_rmse_unit_and_two_frame_formula():
    s = rmse([match_points([[0, 0]], [[0.1, 0]])])
    assert s.mean == pytest.approx(1.0)
    f0 = match_points([[0, 0], [3, 3]], [[0.1, 0], [3, 3.2]])
    f1 = match_points([[1, 1]], [[1, 1.05]])
    r0, r1 = 10 * math.sqrt((0.1 ** 2 + 0.2 ** 2) / 2), 10 * 0.05
    s = rmse([f0, f1])
    assert s.mean == pytest.approx((r0 + r1) / 2)
    assert s.std == pytest.approx(abs(r0 - r1) / 2)
    assert jaccard([f0, f1]) == 100.0
    assert jaccard(match_points([[0, 0]], [[3, 3]])) == 0.0


def test_empty_frames_contribute_nothing():
    ms = evaluate({0: np.zeros((0, 2)), 1: np.array([[0.0, 0.0]])},
                  {0: np.zeros((0, 2)), 1: np.array([[0.05, 0.0]])})
    assert jaccard(ms) == 100.0 and rmse(ms).frames == 1


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 8), st.integers(1, 8), st.floats(0.05, 0.5))
def test_matching_invariants(seed, ng, ne, gate):
    rng = np.random.default_rng(seed)
    gt = rng.uniform(0, 1.5, (ng, 2))
    est = rng.uniform(0, 1.5, (ne, 2))
    m = match_points(gt, est, gate)
    p = match_points(gt[rng.permutation(ng)], est[rng.permutation(ne)], gate)
    assert (m.tp, m.fp, m.fn) == (p.tp, p.fp, p.fn)
    if m.tp:
        assert p.rmse == pytest.approx(m.rmse)
    assert match_points(gt, est, gate * 1.5).tp >= m.tp
    j = jaccard(m)
    assert 0.0 <= j <= 100.0
    more = match_points(gt, np.vstack([est, [[99.0, 99.0]]]), gate)
    assert jaccard(more) <= j


def test_timer_accounting():
    import time

    t = StageTimer()
    for name in ("a", "b"):
        with t.stage(name):
            time.sleep(0.01)
    rows = t.report()
    assert sum(r[1] for r in rows[:-1]) <= rows[-1][1]
