"""Command-line entry point: one subcommand per pipeline stage.

Exit codes: 0 success, 2 configuration error, 3 runtime or numerical error.
Artifacts depend only on the config and its seeds. Wall-clock timings go to
stdout and, when ``paths.timing_dir`` is set, to ``<stage>_timing.json`` in
that directory; those timing files are the only non-deterministic outputs.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys

import numpy as np

from . import config as cfgmod
from . import formats
from .config import ConfigError

log = logging.getLogger("rfulm")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _region(cfg, g):
    from .pipeline import field_region

    gc = cfg["geometry"]
    return field_region(g, gc["field.z_min_wl"], gc["field.z_max_wl"], gc["field.margin_pitches"])


def _sim_config(cfg, frames, seed):
    from .pipeline import SimConfig

    s = cfg["simulation"]
    return SimConfig(frames=frames, bubbles_min=s["bubbles_min"], bubbles_max=s["bubbles_max"],
                     amplitude_min=s["amplitude_min"], amplitude_max=s["amplitude_max"],
                     clutter_db=s["clutter_db"], tissue_scatterers=s["tissue_scatterers"],
                     tissue_amplitude=s["tissue_amplitude"],
                     fractional_bandwidth=s["fractional_bandwidth"], seed=seed)


def _train_config(cfg):
    from .localizer import TrainConfig

    t = cfg["training"]
    return TrainConfig(batch_size=t["batch_size"], weight_decay=t["weight_decay"],
                       lr_init=t["lr_init"], max_epochs=t["max_epochs"], lambda1=t["lambda1"],
                       sigma=t["sigma"], R=t["R"], normalize=t["normalize"],
                       clutter_db=t["clutter_db"], seed=t["seed"], widths=tuple(t["widths"]),
                       kernel=t["kernel"])


def _filter_config(cfg):
    from .pipeline import FilterConfig

    i = cfg["inference"]
    band = None if i["band_low_hz"] is None else (i["band_low_hz"], i["band_high_hz"])
    return FilterConfig(i["svd_cut_low"], i["svd_cut_high"], band)


def _require(cfg, *keys, inputs=()):
    """Validate the paths a stage touches before it starts."""
    for k in keys:
        p = cfg.path(k)
        if p is None:
            raise ConfigError(f"paths.{k} must be set for this command")
        if k in inputs:
            if not os.path.isfile(p):
                raise ConfigError(f"paths.{k}: input file {p} does not exist")
        else:
            d = os.path.dirname(os.path.abspath(p))
            if not os.path.isdir(d):
                raise ConfigError(f"paths.{k}: output directory {d} does not exist")


def _split_frames(frames, angles_file, cfg):
    """(F, U, V) file frames -> (N, A, U, V) checked against the configured geometry."""
    angles = cfgmod.angles_rad(cfg)
    A = len(angles)
    if len(angles_file) != A or not np.allclose(angles_file, angles, atol=1e-6):
        raise RuntimeError("RF file angles do not match geometry.tx_angles_deg")
    g = cfg["geometry"]
    F, U, V = frames.shape
    if (U, V) != (g["num_samples"], g["elements.count"]):
        raise RuntimeError(f"RF file frames are {U}x{V}, geometry expects "
                           f"{g['num_samples']}x{g['elements.count']}")
    return frames.reshape(F // A, A, U, V).astype(np.complex128), angles


def _read_dataset(cfg, rf_key, labels_key=None):
    frames, file_angles = formats.read_rfb(cfg.path(rf_key))
    rf, angles = _split_frames(frames, file_angles, cfg)
    labels = None
    if labels_key is not None:
        by_frame = formats.group_by_frame(formats.read_localizations(cfg.path(labels_key), "bmode"))
        empty = np.zeros((0, 3))
        labels = [by_frame.get(n, empty)[:, :2] for n in range(rf.shape[0])]
    return rf, angles, labels


def _bmode_rows(sets):
    rows = []
    for s in sets:
        for (c1, c2), sc in zip(s.coords, s.scores):
            rows.append((s.frame_index, "bmode", math.nan, c1, c2, sc))
    return rows


def _write_timing(cfg, stage, timer):
    from .metrics import timing_report

    print(timing_report(timer))
    d = cfg.path("timing_dir")
    if d is None:
        return
    os.makedirs(d, exist_ok=True)
    rows = {name: {"total_s": tot, "per_frame_s": per} for name, tot, per in timer.report()}
    with open(os.path.join(d, f"{stage}_timing.json"), "w") as fh:
        json.dump(rows, fh, indent=2)


def cmd_simulate(cfg):
    from .pipeline import simulate_dataset

    _require(cfg, "rf", "labels")
    s = cfg["simulation"]
    g = cfgmod.build_geometry(cfg)
    angles = cfgmod.angles_rad(cfg)
    region = _region(cfg, g)
    jobs = [("rf", "labels", s["frames"], 2 * s["seed"] + 1)]
    if s["train_frames"] > 0:
        _require(cfg, "train_rf", "train_labels")
        jobs.append(("train_rf", "train_labels", s["train_frames"], 2 * s["seed"]))
    for rf_key, lab_key, frames, seed in jobs:
        ds = simulate_dataset(g, angles, region, _sim_config(cfg, frames, seed))
        N, A, U, V = ds.rf.shape
        formats.write_rfb(cfg.path(rf_key), ds.rf.reshape(N * A, U, V), angles)
        formats.write_sidecar(cfg.path(rf_key) + ".json", cfgmod.geometry_keys(cfg))
        rows = [(n, "bmode", math.nan, y, z, 1.0)
                for n in range(N) for y, z in ds.bmode_labels[n]]
        formats.write_localizations(cfg.path(lab_key), rows)
        print(f"{rf_key}: {N} acquisitions x {A} angles, {len(rows)} bubbles")


def cmd_fit_affine(cfg):
    from .transform import fit_per_angle

    _require(cfg, "affine")
    c = cfg["calibration"]
    g = cfgmod.build_geometry(cfg)
    lat, _ = _region(cfg, g)
    maps = fit_per_angle(g, cfgmod.angles_rad(cfg), (lat, (c["z_min_wl"], c["z_max_wl"])),
                         c["points"], c["seed"], c["method"])
    for m in maps:
        print(f"angle {math.degrees(m.tx_angle):+g} deg: residual rms {m.fit_residual_rms:.6g} wl")
    formats.write_affine_maps(cfg.path("affine"), maps)


def _training_frames(cfg, g, rf, angles, labels):
    from .geometry import apex_points
    from .pipeline import filter_stack

    data = filter_stack(rf, g, _filter_config(cfg))
    frames, rf_labels = [], []
    for a, ang in enumerate(angles):
        ga = g.steered(ang)
        for n in range(rf.shape[0]):
            frames.append(data[n, a])
            rf_labels.append(apex_points(labels[n], ga) if len(labels[n]) else np.zeros((0, 2)))
    return frames, rf_labels


def cmd_train(cfg):
    from .localizer import SrNetwork, train

    _require(cfg, "train_rf", "train_labels", "checkpoint", "loss",
             inputs=("train_rf", "train_labels"))
    tcfg = _train_config(cfg)
    g = cfgmod.build_geometry(cfg)
    rf, angles, labels = _read_dataset(cfg, "train_rf", "train_labels")
    frames, rf_labels = _training_frames(cfg, g, rf, angles, labels)
    net = SrNetwork(tcfg.widths, tcfg.R, tcfg.kernel, seed=tcfg.seed)
    history = []
    if frames:
        net, history = train(frames, rf_labels, tcfg, net,
                             progress=lambda e, l, lr: print(f"epoch {e} loss {l:.6g} lr {lr:.3g}"))
    elif tcfg.max_epochs:
        raise RuntimeError("training set has no frames")
    formats.write_checkpoint(cfg.path("checkpoint"), net)
    formats.write_loss_csv(cfg.path("loss"), history)


def _auto_threshold(cfg, net, g, maps, tcfg):
    from .localizer.target import PEAK_AMPLITUDE
    from .pipeline import calibrate_threshold, filter_stack, rf_candidates

    i = cfg["inference"]
    rf, angles, labels = _read_dataset(cfg, "train_rf", "train_labels")
    data = filter_stack(rf, g, _filter_config(cfg))
    geoms = [g.steered(a) for a in angles]
    cands = rf_candidates(net, data, geoms, maps, i["nms_window"], tcfg)
    thr, gm = calibrate_threshold(cands, labels, cfg["eval"]["gate_wl"],
                                  i["candidate_floor"] * PEAK_AMPLITUDE)
    print(f"auto threshold {thr:.6g} (G-mean {gm:.4f})")
    return thr


def cmd_infer(cfg):
    from .metrics import StageTimer
    from .pipeline import infer_rf

    i = cfg["inference"]
    auto = i["threshold"] == "auto"
    need = ("checkpoint", "affine", "rf") + (("train_rf", "train_labels") if auto else ())
    _require(cfg, *need, "localizations", inputs=need)
    tcfg = _train_config(cfg)
    g = cfgmod.build_geometry(cfg)
    net = formats.read_checkpoint(cfg.path("checkpoint"))
    if net.R != tcfg.R:
        raise RuntimeError(f"checkpoint upsampling factor {net.R} != training.R {tcfg.R}")
    maps = formats.read_affine_maps(cfg.path("affine"))
    rf, angles, _ = _read_dataset(cfg, "rf")
    by_angle = {round(math.degrees(m.tx_angle), 6): m for m in maps}
    ordered = []
    for a in angles:
        m = by_angle.get(round(math.degrees(a), 6))
        if m is None:
            raise RuntimeError(f"no affine map for angle {math.degrees(a):g} deg")
        ordered.append(m)
    thr = _auto_threshold(cfg, net, g, ordered, tcfg) if auto else i["threshold"]
    timer = StageTimer()
    sets = infer_rf(net, rf, g, ordered, thr,
                    i["nms_window"], i["dbscan_eps_wl"], _filter_config(cfg), timer, tcfg)
    formats.write_localizations(cfg.path("localizations"), _bmode_rows(sets))
    print(f"{sum(len(s) for s in sets)} localizations in {len(sets)} acquisitions")
    _write_timing(cfg, "infer", timer)


def cmd_baseline(cfg):
    from .metrics import StageTimer
    from .pipeline import (bmode_grid_for, calibrate_das_threshold, das_candidates, das_images,
                           filter_stack, infer_das)

    i = cfg["inference"]
    auto = i["das_threshold"] == "auto"
    need = ("rf",) + (("train_rf", "train_labels") if auto else ())
    _require(cfg, *need, "baseline", inputs=need)
    g = cfgmod.build_geometry(cfg)
    region = _region(cfg, g)
    grid = bmode_grid_for(g, region, i["das_pixel_wl"], i["das_pixel_wl"])
    filt = _filter_config(cfg)
    if auto:
        trf, angles, labels = _read_dataset(cfg, "train_rf", "train_labels")
        imgs = das_images(filter_stack(trf, g, filt), g, angles, grid, i["das_f_number"])
        thr, gm = calibrate_das_threshold(das_candidates(imgs, i["nms_window"]), labels,
                                          cfg["eval"]["gate_wl"])
        print(f"auto threshold {thr:.6g} (G-mean {gm:.4f})")
    else:
        thr = i["das_threshold"]
    rf, angles, _ = _read_dataset(cfg, "rf")
    timer = StageTimer()
    sets = infer_das(rf, g, angles, grid, thr, i["nms_window"], filt, timer, i["das_f_number"])
    formats.write_localizations(cfg.path("baseline"), _bmode_rows(sets))
    print(f"{sum(len(s) for s in sets)} localizations in {len(sets)} acquisitions")
    _write_timing(cfg, "baseline", timer)


def _timing_per_frame(cfg, stage):
    d = cfg.path("timing_dir")
    p = d and os.path.join(d, f"{stage}_timing.json")
    if not p or not os.path.isfile(p):
        return None
    with open(p) as fh:
        return json.load(fh).get("total", {}).get("per_frame_s")


def cmd_eval(cfg):
    from .metrics import evaluate, jaccard, metrics_table, rmse, totals

    _require(cfg, "labels", "metrics", inputs=("labels",))
    gt = {f: v[:, :2] for f, v in
          formats.group_by_frame(formats.read_localizations(cfg.path("labels"), "bmode")).items()}
    methods = [("Ours", "localizations", "infer"), ("Weighted Avg.", "baseline", "baseline")]
    rows = []
    for name, key, stage in methods:
        p = cfg.path(key)
        if p is None or not os.path.isfile(p):
            continue
        est = {f: v[:, :2] for f, v in
               formats.group_by_frame(formats.read_localizations(p, "bmode")).items()}
        ms = evaluate(gt, est, cfg["eval"]["gate_wl"])
        r = rmse(ms)
        tp, fp, fn = totals(ms)
        t = _timing_per_frame(cfg, stage)
        rows.append(dict(method=name, rmse_mean=r.mean, rmse_std=r.std, jaccard=jaccard(ms),
                         tp=tp, fp=fp, fn=fn, time=math.nan if t is None else t))
    if not rows:
        raise ConfigError("no estimate file found (paths.localizations or paths.baseline)")
    print(metrics_table(rows))
    with open(cfg.path("metrics"), "w") as fh:
        fh.write("method,rmse_mean,rmse_std,jaccard,tp,fp,fn\n")
        for r in rows:
            fh.write(f"{r['method']},{r['rmse_mean']:.9g},{r['rmse_std']:.9g},"
                     f"{r['jaccard']:.9g},{r['tp']},{r['fp']},{r['fn']}\n")


def cmd_render(cfg):
    from .render import UlmCanvas, accumulate, export_image

    _require(cfg, "localizations", "image", "canvas", inputs=("localizations",))
    r = cfg["render"]
    g = cfgmod.build_geometry(cfg)
    lat, ax = _region(cfg, g)
    rows = formats.read_localizations(cfg.path("localizations"), "bmode")
    pts = np.array([(c1, c2) for _, _, _, c1, c2, _ in rows], dtype=float).reshape(-1, 2)
    canvas = UlmCanvas(lat, ax, r["pixel_wl"], r["upsample"])
    accumulate(pts, canvas, r["pixel_wl"] if r["dither"] else 0.0, r["seed"])
    export_image(canvas, r["gamma"], cfg.path("image"), r["format"])
    formats.write_canvas(cfg.path("canvas"), canvas.counts)
    print(f"{len(pts)} points: {canvas.total} accumulated, {canvas.dropped} dropped")


COMMANDS = {
    "simulate": cmd_simulate,
    "fit-affine": cmd_fit_affine,
    "train": cmd_train,
    "infer": cmd_infer,
    "baseline": cmd_baseline,
    "eval": cmd_eval,
    "render": cmd_render,
}


def build_parser():
    p = argparse.ArgumentParser(prog="rfulm", description=__doc__.split("\n")[0])
    p.add_argument("command", choices=list(COMMANDS))
    p.add_argument("--config", metavar="PATH",
                   help=f"config file (default: ${cfgmod.ENV_VAR}, else built-in defaults)")
    p.add_argument("--threads", type=int, metavar="N", help="cap on BLAS/worker threads")
    p.add_argument("--seed", type=int, metavar="N", help="override every seed in the config")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = cfgmod.load(args.config)
        if args.seed is not None:
            cfg.override_seed(args.seed)
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        if args.threads is not None:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=args.threads):
                COMMANDS[args.command](cfg)
        else:
            COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # every other failure is a runtime error
        print(f"{args.command} failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
