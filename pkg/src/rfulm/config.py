"""Pipeline configuration in a flat ``section.key = value`` text format.

Grammar, one setting per line::

    # comment
    section.key = value

``key`` may itself contain dots (``geometry.elements.count``). Blank lines and
lines starting with ``#`` are ignored; a ``#`` after a value is not a comment.
Values are typed by the schema below: integers, floats (``inf`` allowed),
booleans (``true``/``false``), strings, comma-separated lists, ``auto`` for
the inference thresholds and ``none`` for an empty path or disabled band.
Unknown sections or keys are rejected. Keys not given keep their defaults.
"""

from __future__ import annotations

import math
import os
from copy import deepcopy

ENV_VAR = "RFULM_CONFIG"

_LAMBDA = 1540.0 / 15.625e6


class ConfigError(ValueError):
    pass


def _parse_bool(s):
    v = s.strip().lower()
    if v in ("true", "yes", "on", "1"):
        return True
    if v in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_float(s):
    return float(s.strip())


def _parse_int(s):
    return int(s.strip())


def _list_of(conv):
    def parse(s):
        s = s.strip()
        return tuple(conv(t) for t in s.split(",")) if s else ()
    return parse


def _auto_or_float(s):
    return "auto" if s.strip().lower() == "auto" else float(s)


def _none_or_str(s):
    s = s.strip()
    return None if s.lower() in ("", "none") else s


def _none_or_float(s):
    s = s.strip()
    return None if s.lower() == "none" else float(s)


def _fmt(v):
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


_F, _I, _B, _S = _parse_float, _parse_int, _parse_bool, str.strip

SCHEMA = {
    "geometry": {
        "elements.count": (_I, 32),
        "elements.pitch_m": (_F, _LAMBDA / 2),
        "speed_of_sound": (_F, 1540.0),
        "sample_rate": (_F, 62.5e6),
        "center_frequency": (_F, 15.625e6),
        "start_offset_m": (_F, 4 * _LAMBDA),
        "num_samples": (_I, 128),
        "tx_angles_deg": (_list_of(_F), (-5.0, 0.0, 5.0)),
        "field.z_min_wl": (_F, 4.0),
        "field.z_max_wl": (_F, 14.0),
        "field.margin_pitches": (_F, 1.0),
    },
    "simulation": {
        "frames": (_I, 50),
        "train_frames": (_I, 200),
        "bubbles_min": (_I, 1),
        "bubbles_max": (_I, 3),
        "amplitude_min": (_F, 0.5),
        "amplitude_max": (_F, 1.0),
        "clutter_db": (_F, 30.0),
        "tissue_scatterers": (_I, 20),
        "tissue_amplitude": (_F, 3.0),
        "fractional_bandwidth": (_F, 0.67),
        "seed": (_I, 0),
    },
    "calibration": {
        "points": (_I, 1000),
        "seed": (_I, 0),
        "z_min_wl": (_F, 6.0),
        "z_max_wl": (_F, 12.0),
        "method": (_S, "lm"),
    },
    "training": {
        "batch_size": (_I, 4),
        "weight_decay": (_F, 1e-8),
        "lr_init": (_F, 1e-3),
        "max_epochs": (_I, 40),
        "lambda1": (_F, 1e-2),
        "sigma": (_F, 1.0),
        "R": (_I, 4),
        "normalize": (_B, True),
        "clutter_db": (_F, 50.0),
        "seed": (_I, 0),
        "widths": (_list_of(_I), (16, 16, 16)),
        "kernel": (_I, 3),
    },
    "inference": {
        "svd_cut_low": (_I, 1),
        "svd_cut_high": (_I, 0),
        "band_low_hz": (_none_or_float, 0.5 * 15.625e6),
        "band_high_hz": (_none_or_float, 1.5 * 15.625e6),
        "nms_window": (_I, 3),
        "threshold": (_auto_or_float, "auto"),
        "candidate_floor": (_F, 0.01),
        "dbscan_eps_wl": (_F, 0.5),
        "das_pixel_wl": (_F, 1.0),
        "das_f_number": (_F, 1.0),
        "das_threshold": (_auto_or_float, "auto"),
    },
    "eval": {
        "gate_wl": (_F, 0.25),
    },
    "render": {
        "upsample": (_I, 10),
        "gamma": (_F, 1.0),
        "dither": (_B, True),
        "pixel_wl": (_F, 1.0),
        "seed": (_I, 0),
        "format": (_S, "png"),
    },
    "paths": {
        "rf": (_none_or_str, "test.rfb"),
        "labels": (_none_or_str, "test_labels.csv"),
        "train_rf": (_none_or_str, "train.rfb"),
        "train_labels": (_none_or_str, "train_labels.csv"),
        "affine": (_none_or_str, "affine.txt"),
        "checkpoint": (_none_or_str, "model.srn"),
        "loss": (_none_or_str, "loss.csv"),
        "localizations": (_none_or_str, "localizations.csv"),
        "baseline": (_none_or_str, "baseline.csv"),
        "metrics": (_none_or_str, "metrics.csv"),
        "image": (_none_or_str, "ulm.png"),
        "canvas": (_none_or_str, "ulm.ulc"),
        "timing_dir": (_none_or_str, None),
    },
}

SEEDED = (("simulation", "seed"), ("calibration", "seed"), ("training", "seed"), ("render", "seed"))


class Config:
    """Typed settings, accessed as ``cfg["section"]["key"]``."""

    def __init__(self, values=None, base_dir="."):
        self.values = {sec: {k: deepcopy(d) for k, (_, d) in keys.items()}
                       for sec, keys in SCHEMA.items()}
        self.base_dir = base_dir
        for sec, kv in (values or {}).items():
            for k, v in kv.items():
                self.set(sec, k, v)
        self.validate()

    def __getitem__(self, section):
        return self.values[section]

    def __eq__(self, other):
        return isinstance(other, Config) and self.values == other.values

    def set(self, section, key, value):
        if section not in SCHEMA:
            raise ConfigError(f"unknown section {section!r}")
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key {section}.{key}")
        conv = SCHEMA[section][key][0]
        if isinstance(value, str):
            try:
                value = conv(value)
            except ValueError as exc:
                raise ConfigError(f"{section}.{key}: {exc}") from None
        self.values[section][key] = value

    def override_seed(self, seed):
        for sec, key in SEEDED:
            self.values[sec][key] = int(seed)

    def path(self, key):
        """Absolute path for ``paths.key`` resolved against the config file directory."""
        p = self.values["paths"][key]
        if p is None:
            return None
        return p if os.path.isabs(p) else os.path.join(self.base_dir, p)

    def validate(self):
        g, s, t, i = self["geometry"], self["simulation"], self["training"], self["inference"]
        checks = [
            (g["elements.count"] >= 2, "geometry.elements.count must be >= 2"),
            (g["elements.pitch_m"] > 0, "geometry.elements.pitch_m must be positive"),
            (g["speed_of_sound"] > 0 and g["sample_rate"] > 0 and g["center_frequency"] > 0,
             "geometry constants must be positive"),
            (g["num_samples"] >= 1, "geometry.num_samples must be >= 1"),
            (len(g["tx_angles_deg"]) >= 1, "geometry.tx_angles_deg needs at least one angle"),
            (all(abs(a) < 90 for a in g["tx_angles_deg"]), "steering angles must be within +-90 deg"),
            (len({round(a, 9) for a in g["tx_angles_deg"]}) == len(g["tx_angles_deg"]),
             "geometry.tx_angles_deg has duplicates"),
            (0 <= g["field.z_min_wl"] < g["field.z_max_wl"], "field z range is empty"),
            (s["frames"] >= 0 and s["train_frames"] >= 0, "frame counts must be non-negative"),
            (0 <= s["bubbles_min"] <= s["bubbles_max"], "bubble count range is invalid"),
            (0 < s["amplitude_min"] <= s["amplitude_max"], "amplitude range is invalid"),
            (s["tissue_scatterers"] >= 0, "simulation.tissue_scatterers must be non-negative"),
            (0 < s["fractional_bandwidth"], "simulation.fractional_bandwidth must be positive"),
            (self["calibration"]["points"] >= 50, "calibration.points must be >= 50"),
            (self["calibration"]["method"] in ("lm", "normal"), "calibration.method is lm or normal"),
            (self["calibration"]["z_min_wl"] < self["calibration"]["z_max_wl"],
             "calibration z range is empty"),
            (t["R"] in (2, 4, 8, 10), "training.R must be one of 2, 4, 8, 10"),
            (t["batch_size"] >= 1 and t["max_epochs"] >= 0, "invalid training batch/epochs"),
            (t["lr_init"] > 0 and t["sigma"] > 0, "training.lr_init and sigma must be positive"),
            (len(t["widths"]) >= 1 and all(w >= 1 for w in t["widths"]), "training.widths invalid"),
            (t["kernel"] >= 1 and t["kernel"] % 2 == 1, "training.kernel must be odd"),
            (i["svd_cut_low"] >= 0 and i["svd_cut_high"] >= 0, "svd cuts must be non-negative"),
            ((i["band_low_hz"] is None) == (i["band_high_hz"] is None),
             "set both band edges or neither"),
            (i["band_low_hz"] is None or 0 <= i["band_low_hz"] < i["band_high_hz"],
             "band edges must satisfy 0 <= low < high"),
            (i["nms_window"] >= 1 and i["nms_window"] % 2 == 1, "inference.nms_window must be odd"),
            (i["threshold"] == "auto" or not math.isnan(i["threshold"]), "threshold is NaN"),
            (i["dbscan_eps_wl"] > 0 and i["das_pixel_wl"] > 0 and i["das_f_number"] > 0,
             "eps, DAS pixel and f-number must be positive"),
            (self["eval"]["gate_wl"] > 0, "eval.gate_wl must be positive"),
            (self["render"]["upsample"] >= 1 and self["render"]["pixel_wl"] > 0,
             "render upsample and pixel must be positive"),
            (self["render"]["gamma"] > 0, "render.gamma must be positive"),
            (self["render"]["format"] in ("png", "pgm"), "render.format is png or pgm"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    def serialize(self):
        lines = []
        for sec, keys in SCHEMA.items():
            for k in keys:
                lines.append(f"{sec}.{k} = {_fmt(self.values[sec][k])}")
            lines.append("")
        return "\n".join(lines)


def parse(text, base_dir="."):
    values = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'section.key = value'")
        lhs, rhs = line.split("=", 1)
        lhs = lhs.strip()
        if "." not in lhs:
            raise ConfigError(f"line {n}: key {lhs!r} has no section")
        sec, key = lhs.split(".", 1)
        if sec not in SCHEMA:
            raise ConfigError(f"line {n}: unknown section {sec!r}")
        if key not in SCHEMA[sec]:
            raise ConfigError(f"line {n}: unknown key {lhs!r}")
        values.setdefault(sec, {})[key] = rhs.strip()
    return Config(values, base_dir)


def load(path=None):
    """Read ``path``, falling back to ``$RFULM_CONFIG``; defaults when neither is set."""
    path = path or os.environ.get(ENV_VAR)
    if not path:
        return Config()
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse(text, os.path.dirname(os.path.abspath(path)))


def build_geometry(cfg):
    """0 degree :class:`ArrayGeometry` described by the geometry section."""
    from .geometry import ArrayGeometry

    g = cfg["geometry"]
    return ArrayGeometry.linear(g["elements.count"], g["elements.pitch_m"], g["speed_of_sound"],
                                g["sample_rate"], g["center_frequency"], g["num_samples"],
                                g["start_offset_m"])


def angles_rad(cfg):
    return [math.radians(a) for a in cfg["geometry"]["tx_angles_deg"]]


def geometry_keys(cfg):
    """Geometry section as a plain dict (RF sidecar content)."""
    return {k: list(v) if isinstance(v, tuple) else v for k, v in cfg["geometry"].items()}
