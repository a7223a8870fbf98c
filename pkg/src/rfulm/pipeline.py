"""Dataset simulation and the two end-to-end localization paths.

``infer_rf`` is the beamforming-free route (filter, network, NMS, threshold,
rescale, affine back-mapping, DBSCAN fusion); ``infer_das`` is the
delay-and-sum plus weighted-average baseline on the same filtered frames.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import BmodePoint  # noqa: F401  (re-exported for callers)
from .localizer import predict, prepare_input, weighted_average_baseline
from .metrics import StageTimer, match_ranked
from .postproc import (BMODE, LocalizationSet, dbscan_fuse, drop_out_of_aperture,
                       extract_points, gmeans_threshold, nms, to_bmode)
from .signal import (BmodeGrid, add_clutter_noise, bandpass_filter, compound,
                     das_beamform, das_delays, simulate_rf_frame, svd_filter)

log = logging.getLogger(__name__)


@dataclass
class SimConfig:
    frames: int = 10
    bubbles_min: int = 1
    bubbles_max: int = 3
    amplitude_min: float = 0.5
    amplitude_max: float = 1.0
    clutter_db: float = 30.0
    tissue_scatterers: int = 0
    tissue_amplitude: float = 3.0
    fractional_bandwidth: float = 0.67
    seed: int = 0


@dataclass
class Dataset:
    """Acquisitions of ``A`` steered frames each.

    ``rf`` is (N, A, U, V) complex; ``bmode_labels[n]`` is (M, 2) wavelengths;
    ``rf_labels[n][a]`` is (M_a, 2) ``(channel, sample)``.
    """

    rf: np.ndarray
    angles: list
    bmode_labels: list = field(default_factory=list)
    rf_labels: list = field(default_factory=list)

    def __len__(self):
        return self.rf.shape[0]


def field_region(g, z_min, z_max, margin_pitches=1.0):
    half = g.to_wavelengths(g.aperture) / 2.0
    m = margin_pitches * g.to_wavelengths(g.pitch)
    return (-half + m, half - m), (z_min, z_max)


def simulate_dataset(g, angles, region, sim):
    """Random bubbles per acquisition, imaged under every steering angle."""
    rng = np.random.default_rng(sim.seed)
    (y0, y1), (z0, z1) = region
    geoms = [g.steered(a) for a in angles]
    trng = np.random.default_rng([sim.seed, 7919])
    tissue = np.column_stack([trng.uniform(y0, y1, sim.tissue_scatterers),
                              trng.uniform(z0, z1, sim.tissue_scatterers)])
    tissue_frames = []
    for ga in geoms:
        if sim.tissue_scatterers:
            amps = sim.tissue_amplitude * trng.uniform(0.5, 1.0, sim.tissue_scatterers)
            sc = list(zip(map(tuple, tissue), amps))
            tissue_frames.append(simulate_rf_frame(sc, ga, (None, sim.fractional_bandwidth)).frame.data)
        else:
            tissue_frames.append(0.0)
    U, V = g.num_samples, g.num_channels
    rf = np.zeros((sim.frames, len(angles), U, V), complex)
    bl, rl = [], []
    for n in range(sim.frames):
        m = int(rng.integers(sim.bubbles_min, sim.bubbles_max + 1))
        pts = np.column_stack([rng.uniform(y0, y1, m), rng.uniform(z0, z1, m)])
        amps = rng.uniform(sim.amplitude_min, sim.amplitude_max, m)
        sc = list(zip(map(tuple, pts), amps))
        per_angle = []
        keep = np.ones(m, bool)
        for a, ga in enumerate(geoms):
            s = simulate_rf_frame(sc, ga, (None, sim.fractional_bandwidth), frame_index=n)
            data = s.frame.data
            if math.isfinite(sim.clutter_db) and m:
                data = add_clutter_noise(data, sim.clutter_db, [sim.seed, n, a])
            rf[n, a] = data + tissue_frames[a]
            keep[list(s.excluded)] = False
            per_angle.append(s)
        bl.append(pts[keep])
        rl.append([_rf_for(pts[keep], ga) for ga in geoms])
    return Dataset(rf, list(angles), bl, rl)


def _rf_for(pts, ga):
    from .geometry import apex_points

    if len(pts) == 0:
        return np.zeros((0, 2))
    return apex_points(pts, ga)


@dataclass
class FilterConfig:
    svd_cut_low: int = 1
    svd_cut_high: int = 0
    band: tuple | None = None  # (f_lo, f_hi) Hz


def filter_stack(rf, g, cfg):
    """SVD clutter filter per angle, then bandpass each frame. ``rf`` is (N, A, U, V)."""
    out = np.array(rf, dtype=complex, copy=True)
    N = out.shape[0]
    if N >= 2 and (cfg.svd_cut_low or cfg.svd_cut_high):
        for a in range(out.shape[1]):
            out[:, a] = svd_filter(out[:, a], cfg.svd_cut_low, cfg.svd_cut_high)
    if cfg.band is not None:
        out = bandpass_filter(out, cfg.band[0], cfg.band[1], g.sample_rate)
    return out


def rf_candidates(net, rf, geoms, maps, window=3, tcfg=None, min_score=0.0):
    """NMS peaks of every frame and angle as B-mode localizations (no fusion)."""
    N, A = rf.shape[:2]
    R = net.R
    result = [[None] * A for _ in range(N)]
    for a in range(A):
        heat = predict(net, list(rf[:, a]), tcfg)
        for n in range(N):
            peaks = nms(heat[n], window)
            s = extract_points(peaks, min_score, R, geoms[a].tx_angle, n)
            s = drop_out_of_aperture(s, geoms[a])
            result[n][a] = to_bmode(s, maps)
    return result


def calibrate_threshold(cands, bmode_labels, gate, floor=0.0):
    """G-means threshold from per-angle candidates matched against ground truth.

    Only candidates scoring at least ``floor`` enter the ROC.
    """
    scores, hits = [], []
    for n, per_angle in enumerate(cands):
        for s in per_angle:
            sel = s.scores >= floor
            scores.append(s.scores[sel])
            hits.append(match_ranked(bmode_labels[n], s.coords[sel], s.scores[sel], gate))
    return gmeans_threshold(np.concatenate(scores), np.concatenate(hits))


def fuse(cands, threshold, eps):
    out = []
    for n, per_angle in enumerate(cands):
        kept = []
        for s in per_angle:
            sel = s.scores >= threshold
            kept.append(LocalizationSet(s.coords[sel], s.scores[sel], BMODE, s.tx_angles[sel], n))
        merged = LocalizationSet.concat(kept, frame_index=n) if kept else LocalizationSet(space=BMODE, frame_index=n)
        out.append(dbscan_fuse(merged, eps))
    return out


def infer_rf(net, rf, g, maps, threshold, window=3, eps=0.5, filt=None, timer=None, tcfg=None):
    """Beamforming-free localization of (N, A, U, V) frames; one set per acquisition."""
    timer = timer or StageTimer()
    geoms = [g.steered(m.tx_angle) for m in maps]
    with timer.stage("filtering"):
        data = filter_stack(rf, g, filt) if filt is not None else rf
    with timer.stage("inference"):
        cands = rf_candidates(net, data, geoms, maps, window, tcfg,
                              min_score=threshold if math.isfinite(threshold) else math.inf)
    with timer.stage("postproc"):
        sets = fuse(cands, threshold, eps)
    timer.frames += rf.shape[0]
    return sets


def bmode_grid_for(g, region, lateral_pitch, axial_pitch):
    (y0, y1), (z0, z1) = region
    return BmodeGrid.regular((y0, y1), (z0, z1), lateral_pitch, axial_pitch)


def das_images(rf, g, angles, grid, f_number=1.0):
    """Compounded complex B-mode image per acquisition."""
    geoms = [g.steered(a) for a in angles]
    delays = [das_delays(ga, grid, f_number) for ga in geoms]
    imgs = []
    for n in range(rf.shape[0]):
        imgs.append(compound([das_beamform(rf[n, a], geoms[a], grid, delays=delays[a])
                              for a in range(len(angles))]))
    return imgs


def das_candidates(imgs, window=3):
    out = []
    for n, im in enumerate(imgs):
        env = im.envelope
        peak = env.max()
        scaled = env / peak if peak > 0 else env
        out.append(weighted_average_baseline(scaled, window, 0.0, grid=im.grid, frame_index=n))
    return out


def infer_das(rf, g, angles, grid, threshold, window=3, filt=None, timer=None, f_number=1.0):
    timer = timer or StageTimer()
    with timer.stage("filtering"):
        data = filter_stack(rf, g, filt) if filt is not None else rf
    with timer.stage("das"):
        imgs = das_images(data, g, angles, grid, f_number)
    with timer.stage("postproc"):
        cands = das_candidates(imgs, window)
        sets = []
        for s in cands:
            sel = s.scores >= threshold
            sets.append(LocalizationSet(s.coords[sel], s.scores[sel], BMODE, s.tx_angles[sel],
                                        s.frame_index))
    timer.frames += rf.shape[0]
    return sets


def calibrate_das_threshold(cands, bmode_labels, gate, floor=0.0):
    return calibrate_threshold([[c] for c in cands], bmode_labels, gate, floor)


def training_pairs(ds):
    """Flatten a dataset into per-frame inputs and RF labels for the trainer."""
    frames, labels = [], []
    for n in range(len(ds)):
        for a in range(len(ds.angles)):
            frames.append(ds.rf[n, a])
            labels.append(ds.rf_labels[n][a])
    return frames, labels


__all__ = [
    "Dataset", "FilterConfig", "SimConfig", "bmode_grid_for", "calibrate_das_threshold",
    "calibrate_threshold", "das_candidates", "das_images", "field_region", "filter_stack",
    "fuse", "infer_das", "infer_rf", "prepare_input", "rf_candidates", "simulate_dataset",
    "training_pairs",
]
