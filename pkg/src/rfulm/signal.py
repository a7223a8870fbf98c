"""Synthetic RF channel data, clutter filtering and the delay-and-sum baseline.

Complex samples use the ``exp(-j 2 pi f_c (t - t0))`` carrier convention, so
simulated echoes occupy negative frequencies. Filters that care about
frequency treat both spectral halves symmetrically.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage
from scipy import signal as sps

from . import kernels
from .geometry import apex_points, in_aperture_mask, project_points

log = logging.getLogger(__name__)

CLUTTER_OFF = math.inf


@dataclass(frozen=True, eq=False)
class RfFrame:
    """Complex channel data of shape (U samples, V channels)."""

    data: np.ndarray
    tx_angle: float = 0.0
    frame_index: int = 0
    normalization_scale: float = 1.0

    @property
    def shape(self):
        return self.data.shape

    def planes(self, dtype=np.float64):
        """Real/imaginary stacked as (2, U, V)."""
        return np.stack([self.data.real, self.data.imag]).astype(dtype)


@dataclass(frozen=True, eq=False)
class FrameStack:
    """F frames of identical shape acquired under one transmit angle."""

    data: np.ndarray  # (F, U, V) complex
    tx_angle: float = 0.0

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError("frame stack must be (F, U, V)")

    @property
    def casorati(self):
        F = self.data.shape[0]
        return self.data.reshape(F, -1).T

    def frames(self):
        return [RfFrame(d, self.tx_angle, i) for i, d in enumerate(self.data)]


@dataclass(frozen=True, eq=False)
class BmodeGrid:
    """Pixel centres in wavelengths: ``lateral`` (W,) and ``axial`` (H,)."""

    lateral: np.ndarray
    axial: np.ndarray

    def __post_init__(self):
        for ax in (self.lateral, self.axial):
            if ax.size > 1 and np.any(np.diff(ax) <= 0):
                raise ValueError("grid coordinates must be strictly increasing")

    @classmethod
    def regular(cls, lat_range, ax_range, lat_pitch, ax_pitch):
        if lat_pitch <= 0 or ax_pitch <= 0:
            raise ValueError("grid pitches must be positive")
        lat = np.arange(lat_range[0], lat_range[1] + 1e-9, lat_pitch)
        ax = np.arange(ax_range[0], ax_range[1] + 1e-9, ax_pitch)
        return cls(lat, ax)

    @property
    def shape(self):
        return (self.axial.size, self.lateral.size)

    @property
    def pitch(self):
        return (float(self.lateral[1] - self.lateral[0]) if self.lateral.size > 1 else 1.0,
                float(self.axial[1] - self.axial[0]) if self.axial.size > 1 else 1.0)

    def same_as(self, other):
        return (self.lateral.shape == other.lateral.shape and self.axial.shape == other.axial.shape
                and np.array_equal(self.lateral, other.lateral)
                and np.array_equal(self.axial, other.axial))

    def index_to_wl(self, rows, cols):
        """Continuous pixel indices to (lateral, axial) wavelengths."""
        lp, ap = self.pitch
        return np.column_stack([self.lateral[0] + np.asarray(cols, float) * lp,
                                self.axial[0] + np.asarray(rows, float) * ap])


@dataclass(frozen=True, eq=False)
class BmodeImage:
    data: np.ndarray  # (H, W) complex
    grid: BmodeGrid

    @property
    def envelope(self):
        return np.abs(self.data)


@dataclass(frozen=True, eq=False)
class SimulatedFrame:
    frame: RfFrame
    rf_labels: np.ndarray      # (M, 2) channel, sample
    bmode_labels: np.ndarray   # (M, 2) lateral, axial in wavelengths
    excluded: tuple = ()


def pulse_sigma_samples(g, fractional_bandwidth=0.67):
    """Gaussian envelope std in samples for a -6 dB fractional bandwidth."""
    bw = fractional_bandwidth * g.center_frequency
    sigma_t = math.sqrt(2.0 * math.log(2.0)) / (math.pi * bw)
    return sigma_t * g.sample_rate


def _echoes(arrivals, amplitudes, g, sigma):
    t = np.arange(g.num_samples, dtype=float)
    dt = t[None, :, None] - arrivals[:, None, :]  # (N, U, K)
    env = np.exp(-dt ** 2 / (2.0 * sigma ** 2))
    carrier = np.exp(-2j * math.pi * (g.center_frequency / g.sample_rate) * dt)
    return amplitudes[:, None, None] * env * carrier


def simulate_rf_frame(scatterers, g, pulse=(None, 0.67), frame_index=0, labelled=None):
    """Sum of Gaussian-envelope echoes centred on the projected arrival samples.

    ``scatterers`` is a sequence of ``(BmodePoint | (lat, ax), amplitude)``.
    ``labelled`` masks which scatterers produce ground-truth labels (all by
    default); unlabelled ones model static tissue. Labels whose apex falls
    outside the RF frame are dropped and reported in ``excluded``.
    """
    fc, frac_bw = pulse
    if fc is not None and fc != g.center_frequency:
        g = replace(g, center_frequency=fc)
    pts = np.array([(p.lateral, p.axial) if hasattr(p, "lateral") else tuple(p)
                    for p, _ in scatterers], dtype=float).reshape(-1, 2)
    amps = np.array([a for _, a in scatterers], dtype=float)
    if np.any(amps <= 0):
        raise ValueError("scatterer amplitudes must be positive")
    U, K = g.num_samples, g.num_channels
    if pts.shape[0] == 0:
        return SimulatedFrame(RfFrame(np.zeros((U, K), complex), g.tx_angle, frame_index),
                              np.zeros((0, 2)), np.zeros((0, 2)))
    arrivals = project_points(pts, g)
    sigma = pulse_sigma_samples(g, frac_bw)
    data = _echoes(arrivals, amps, g, sigma).sum(axis=0)
    if labelled is None:
        labelled = np.ones(pts.shape[0], bool)
    labelled = np.asarray(labelled, bool)
    apex = apex_points(pts, g)
    inside = in_aperture_mask(apex, g)
    keep = labelled & inside
    excluded = tuple(int(i) for i in np.flatnonzero(labelled & ~inside))
    if excluded:
        log.warning("frame %d: %d scatterer(s) project outside the RF frame", frame_index,
                    len(excluded))
    return SimulatedFrame(RfFrame(data, g.tx_angle, frame_index), apex[keep], pts[keep], excluded)


def _smoothing_kernel():
    x = np.array([-1.0, 0.0, 1.0])
    k1 = np.exp(-x ** 2 / 2.0)
    k = np.outer(k1, k1)
    return k / k.sum()


def frame_power(x):
    return float(np.mean(np.abs(x) ** 2))


def add_clutter_noise(f, ratio_db, seed):
    """Add smoothed complex Gaussian noise at a signal-to-clutter ratio of ``ratio_db``."""
    if math.isinf(ratio_db) and ratio_db > 0:
        return f
    data = f.data if isinstance(f, RfFrame) else np.asarray(f)
    if data.size == 0:
        raise ValueError("empty frame")
    p_sig = frame_power(data)
    if p_sig == 0.0:
        raise ValueError("signal power of an all-zero frame is undefined")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(data.shape) + 1j * rng.standard_normal(data.shape)
    k = _smoothing_kernel()
    noise = (ndimage.convolve(noise.real, k, mode="wrap")
             + 1j * ndimage.convolve(noise.imag, k, mode="wrap"))
    target = p_sig / 10.0 ** (ratio_db / 10.0)
    noise *= math.sqrt(target / frame_power(noise))
    out = data + noise
    return replace(f, data=out) if isinstance(f, RfFrame) else out


def normalize_amplitude(f):
    """Scale so that ``max(|real|, |imag|) == 1``; the divisor is stored on the frame."""
    peak = float(max(np.max(np.abs(f.data.real), initial=0.0),
                     np.max(np.abs(f.data.imag), initial=0.0)))
    if peak == 0.0:
        log.warning("normalize_amplitude: all-zero frame left unchanged")
        return replace(f, normalization_scale=1.0)
    return replace(f, data=f.data / peak, normalization_scale=peak)


def hilbert_analytic(real_frame):
    """Analytic signal along fast time (axis 0) of a real (U, V) frame."""
    x = np.asarray(real_frame, dtype=float)
    if x.shape[0] < 4:
        raise ValueError("need at least 4 fast-time samples")
    return x + 1j * np.imag(sps.hilbert(x, axis=0))


def svd_filter(stack, cut_low=1, cut_high=0):
    """Remove the ``cut_low`` largest and ``cut_high`` smallest singular components."""
    data = stack.data if isinstance(stack, FrameStack) else np.asarray(stack)
    F = data.shape[0]
    cas = data.reshape(F, -1).T
    rank = min(cas.shape)
    if F < 2:
        raise ValueError("SVD filtering needs at least two frames")
    if cut_low < 0 or cut_high < 0 or cut_low + cut_high >= rank:
        raise ValueError(f"cuts ({cut_low}, {cut_high}) exhaust the rank {rank}")
    u, s, vh = np.linalg.svd(cas, full_matrices=False)
    s = s.copy()
    s[:cut_low] = 0.0
    if cut_high:
        s[rank - cut_high:] = 0.0
    out = ((u * s) @ vh).T.reshape(data.shape)
    return replace(stack, data=out) if isinstance(stack, FrameStack) else out


def bandpass_filter(f, f_lo, f_hi, sample_rate):
    """Zero FFT bins along fast time whose |frequency| lies outside [f_lo, f_hi]."""
    if not (0 <= f_lo < f_hi <= sample_rate / 2):
        raise ValueError(f"invalid band [{f_lo}, {f_hi}] for sample rate {sample_rate}")
    data = f.data if isinstance(f, RfFrame) else np.asarray(f)
    axis = -2 if data.ndim >= 2 else 0
    n = data.shape[axis]
    freqs = np.abs(np.fft.fftfreq(n, d=1.0 / sample_rate))
    keep = (freqs >= f_lo) & (freqs <= f_hi)
    shape = [1] * data.ndim
    shape[axis] = n
    spec = np.fft.fft(data, axis=axis) * keep.reshape(shape)
    out = np.fft.ifft(spec, axis=axis)
    if not np.iscomplexobj(data):
        out = out.real
    return replace(f, data=out) if isinstance(f, RfFrame) else out


def das_delays(g, grid, f_number=1.0):
    """Receive delays in samples and rectangular f-number apodization, each (P, K)."""
    yy, zz = np.meshgrid(grid.lateral, grid.axial)
    pts = np.column_stack([yy.ravel(), zz.ravel()])
    delays = project_points(pts, g)
    el = g.element_lateral_wl()
    half = pts[:, 1:2] / (2.0 * f_number)
    weights = (np.abs(pts[:, 0:1] - el[None, :]) <= half).astype(float)
    return np.ascontiguousarray(delays), np.ascontiguousarray(weights)


def das_beamform(f, g, grid, f_number=1.0, delays=None):
    """Delay-and-sum image using the same time-of-flight model as the simulator."""
    data = np.ascontiguousarray(f.data if isinstance(f, RfFrame) else f, dtype=complex)
    if delays is None:
        delays = das_delays(g, grid, f_number)
    d, w = delays
    out = kernels.das_sum(data, d, w)
    return BmodeImage(np.asarray(out).reshape(grid.shape), grid)


def compound(images):
    """Coherent compounding: complex mean over transmit angles."""
    images = list(images)
    if not images:
        raise ValueError("nothing to compound")
    grid = images[0].grid
    for im in images[1:]:
        if not im.grid.same_as(grid):
            raise ValueError("cannot compound images on different grids")
    if len(images) == 1:
        return images[0]
    return BmodeImage(np.mean([im.data for im in images], axis=0), grid)
