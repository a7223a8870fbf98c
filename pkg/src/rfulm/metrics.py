"""Localization scoring: gated matching, RMSE and Jaccard index."""

from __future__ import annotations

import math
import time
from collections import OrderedDict
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

DEFAULT_GATE = 0.25  # wavelengths


@dataclass
class MatchResult:
    pairs: list = field(default_factory=list)  # (gt_index, est_index, distance)
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def distances(self):
        return np.array([d for _, _, d in self.pairs], dtype=float)

    @property
    def rmse(self):
        """Per-frame RMSE in wavelengths, NaN without true positives."""
        if not self.pairs:
            return math.nan
        d = self.distances
        return float(np.sqrt(np.mean(d ** 2)))


def _coords(x):
    return np.asarray(getattr(x, "coords", x), dtype=float).reshape(-1, 2)


def match_points(gt, est, gate=DEFAULT_GATE):
    """Greedy closest-pair matching of estimates to ground truth.

    Pairs are taken in order of increasing distance while the distance is
    strictly below ``gate``; each point is used at most once.
    """
    g, e = _coords(gt), _coords(est)
    res = MatchResult()
    if len(g) and len(e):
        d = np.linalg.norm(g[:, None, :] - e[None, :, :], axis=2)
        gi, ei = np.nonzero(d < gate)
        order = np.lexsort((ei, gi, d[gi, ei]))
        used_g, used_e = set(), set()
        for o in order:
            a, b = int(gi[o]), int(ei[o])
            if a in used_g or b in used_e:
                continue
            used_g.add(a)
            used_e.add(b)
            res.pairs.append((a, b, float(d[a, b])))
    res.tp = len(res.pairs)
    res.fn = len(g) - res.tp
    res.fp = len(e) - res.tp
    return res


def match_ranked(gt, est, scores, gate=DEFAULT_GATE):
    """Detection-style matching: estimates in descending score order take their
    closest free ground-truth point within ``gate``.

    Returns a boolean hit flag per estimate. Lower-scored duplicates around an
    already matched point count as misses, which is what a threshold sweep
    over scores needs.
    """
    g, e = _coords(gt), _coords(est)
    hits = np.zeros(len(e), bool)
    if not len(g) or not len(e):
        return hits
    d = np.linalg.norm(e[:, None, :] - g[None, :, :], axis=2)
    free = np.ones(len(g), bool)
    for i in np.argsort(-np.asarray(scores, float), kind="stable"):
        cand = np.flatnonzero(free & (d[i] < gate))
        if cand.size:
            j = cand[np.argmin(d[i, cand])]
            free[j] = False
            hits[i] = True
            if not free.any():
                break
    return hits


@dataclass
class RmseSummary:
    mean: float
    std: float
    frames: int

    @property
    def defined(self):
        return self.frames > 0


def rmse(matches):
    """Mean and std over frames of per-frame RMSE, in tenths of a wavelength."""
    per_frame = [m.rmse * 10.0 for m in matches if m.tp > 0]
    if not per_frame:
        return RmseSummary(math.nan, math.nan, 0)
    v = np.array(per_frame)
    return RmseSummary(float(v.mean()), float(v.std()), len(per_frame))


def totals(matches):
    tp = sum(m.tp for m in matches)
    fp = sum(m.fp for m in matches)
    fn = sum(m.fn for m in matches)
    return tp, fp, fn


def jaccard(matches):
    """Jaccard index in percent, NaN when there is nothing to score."""
    if isinstance(matches, MatchResult):
        matches = [matches]
    tp, fp, fn = totals(matches)
    if tp + fp + fn == 0:
        return math.nan
    return 100.0 * tp / (tp + fp + fn)


def evaluate(gt_sets, est_sets, gate=DEFAULT_GATE):
    """Match frame by frame; ``gt_sets`` and ``est_sets`` map frame index to points."""
    frames = sorted(set(gt_sets) | set(est_sets))
    empty = np.zeros((0, 2))
    return [match_points(gt_sets.get(f, empty), est_sets.get(f, empty), gate) for f in frames]


class StageTimer:
    """Accumulates wall-clock time per named pipeline stage."""

    def __init__(self):
        self.stages = OrderedDict()
        self._t0 = time.perf_counter()
        self.frames = 0

    @contextmanager
    def stage(self, name):
        t = time.perf_counter()
        try:
            yield
        finally:
            self.stages[name] = self.stages.get(name, 0.0) + time.perf_counter() - t

    @property
    def total(self):
        return time.perf_counter() - self._t0

    def report(self):
        """Rows of ``(stage, total seconds, seconds per frame)``, plus a total row."""
        n = max(self.frames, 1)
        rows = [(k, v, v / n) for k, v in self.stages.items()]
        tot = self.total
        rows.append(("total", tot, tot / n))
        return rows


def timing_report(timer):
    lines = [f"{'stage':<12}{'total [s]':>12}{'per frame [s]':>16}"]
    for name, tot, per in timer.report():
        lines.append(f"{name:<12}{tot:>12.4f}{per:>16.6f}")
    return "\n".join(lines)


def metrics_table(rows):
    """Human-readable table with columns Method, RMSE [lambda/10], Jaccard [%], Time [s]."""
    head = f"{'Method':<16}{'RMSE [lambda/10]':>20}{'Jaccard [%]':>14}{'Time [s]':>12}"
    out = [head, "-" * len(head)]
    for r in rows:
        rm = "undefined" if math.isnan(r["rmse_mean"]) else f"{r['rmse_mean']:.3f} +- {r['rmse_std']:.3f}"
        jc = "undefined" if math.isnan(r["jaccard"]) else f"{r['jaccard']:.3f}"
        tm = "" if r.get("time") is None or math.isnan(r["time"]) else f"{r['time']:.4f}"
        out.append(f"{r['method']:<16}{rm:>20}{jc:>14}{tm:>12}")
    return "\n".join(out)
