"""Acquisition geometry and time-of-flight projection of B-mode points into RF space.

Public point coordinates are in wavelength units; everything inside
:class:`ArrayGeometry` is in meters. Three-vectors are ordered
``(lateral, elevation, axial)`` and the array lies on the axial origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

DEFAULT_STANDOFF_FACTOR = 1000.0


def _finite(*values):
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"non-finite coordinate {v!r}")


@dataclass(frozen=True)
class BmodePoint:
    """Point in B-mode space, ``(lateral, axial)`` in wavelengths."""

    lateral: float
    axial: float

    def __post_init__(self):
        _finite(self.lateral, self.axial)
        if self.axial < 0:
            raise ValueError("axial coordinate must be >= 0")

    @property
    def homogeneous(self):
        return np.array([self.lateral, self.axial, 1.0])


@dataclass(frozen=True)
class RfLabel:
    """Point in RF space: continuous channel index and fast-time sample."""

    channel: float
    sample: float
    source_index: int = -1

    def __post_init__(self):
        _finite(self.channel, self.sample)

    @property
    def homogeneous(self):
        return np.array([self.channel, self.sample, 1.0])


@dataclass(frozen=True, eq=False)
class ArrayGeometry:
    element_positions: np.ndarray
    virtual_source: np.ndarray
    start_offset: float
    speed_of_sound: float
    sample_rate: float
    num_samples: int
    center_frequency: float
    tx_angle: float = 0.0
    wavelength: float = field(init=False)

    def __post_init__(self):
        el = np.array(self.element_positions, dtype=float).reshape(-1, 3)
        vs = np.array(self.virtual_source, dtype=float).reshape(3)
        if el.shape[0] < 2:
            raise ValueError("need at least two elements")
        if np.any(np.diff(el[:, 0]) <= 0):
            raise ValueError("element lateral positions must be strictly increasing")
        if np.any(el[:, 2] != 0):
            raise ValueError("elements must sit on the axial origin")
        if not (self.speed_of_sound > 0 and self.sample_rate > 0 and self.center_frequency > 0):
            raise ValueError("speed of sound, sample rate and center frequency must be positive")
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")
        if not (np.all(np.isfinite(el)) and np.all(np.isfinite(vs)) and math.isfinite(self.start_offset)):
            raise ValueError("non-finite geometry")
        el.setflags(write=False)
        vs.setflags(write=False)
        object.__setattr__(self, "element_positions", el)
        object.__setattr__(self, "virtual_source", vs)
        object.__setattr__(self, "wavelength", self.speed_of_sound / self.center_frequency)

    @classmethod
    def linear(cls, count, pitch, speed_of_sound=1540.0, sample_rate=62.5e6,
               center_frequency=15.625e6, num_samples=128, start_offset=0.0):
        """Linear array centred on the lateral origin with a 0 degree plane-wave source."""
        lateral = (np.arange(count) - (count - 1) / 2.0) * pitch
        el = np.zeros((count, 3))
        el[:, 0] = lateral
        g = cls(el, np.zeros(3), start_offset, speed_of_sound, sample_rate,
                int(num_samples), center_frequency)
        return g.steered(0.0)

    @property
    def num_channels(self):
        return self.element_positions.shape[0]

    @property
    def pitch(self):
        return float(np.mean(np.diff(self.element_positions[:, 0])))

    @property
    def aperture(self):
        return float(self.element_positions[-1, 0] - self.element_positions[0, 0])

    @property
    def samples_per_wavelength(self):
        """Fast-time samples per wavelength of two-way path."""
        return self.wavelength * self.sample_rate / self.speed_of_sound

    def to_meters(self, wl):
        return np.asarray(wl, dtype=float) * self.wavelength

    def to_wavelengths(self, m):
        return np.asarray(m, dtype=float) / self.wavelength

    def element_lateral_wl(self):
        return self.to_wavelengths(self.element_positions[:, 0])

    def steered(self, angle, standoff=None, base_offset=None):
        """Copy of this geometry insonified by a plane wave at ``angle`` radians.

        ``base_offset`` is the path already elapsed at sample 0 measured from a
        plane wave through the array centre. The returned ``start_offset`` adds
        the virtual-source standoff so the projection stays in range.
        """
        if standoff is None:
            standoff = DEFAULT_STANDOFF_FACTOR * self.aperture
        if base_offset is None:
            base_offset = self.base_offset
        vs = plane_wave_virtual_source(angle, standoff, self)
        return replace(self, virtual_source=vs, start_offset=base_offset + standoff,
                       tx_angle=float(angle))

    @property
    def base_offset(self):
        return self.start_offset - float(np.linalg.norm(self.virtual_source))


def plane_wave_virtual_source(angle, standoff, g):
    """Far-field virtual source emulating a plane wave steered by ``angle``.

    The source sits ``standoff`` meters behind the array centre along the
    steering direction, so the transmit path to a point is approximately
    ``standoff + y sin(angle) + z cos(angle)``. Curvature across the
    aperture is ``aperture**2 / (8 * standoff)``; the default standoff of
    1000 apertures keeps it far below 0.01 wavelength.
    """
    if not abs(angle) < math.pi / 2:
        raise ValueError("steering angle must satisfy |angle| < pi/2")
    if standoff <= g.aperture:
        raise ValueError(f"standoff {standoff} m must exceed the aperture width {g.aperture} m")
    return -standoff * np.array([math.sin(angle), 0.0, math.cos(angle)])


def _points_m(points_wl, g):
    p = np.atleast_2d(np.asarray(points_wl, dtype=float))
    out = np.zeros((p.shape[0], 3))
    out[:, 0] = p[:, 0] * g.wavelength
    out[:, 2] = p[:, 1] * g.wavelength
    return out


def project_point(p, g, k):
    """Fast-time arrival sample of the echo from ``p`` on channel ``k``."""
    if not 0 <= k < g.num_channels:
        raise IndexError(f"channel {k} outside [0, {g.num_channels})")
    pm = np.array([g.to_meters(p.lateral), 0.0, g.to_meters(p.axial)])
    tx = math.dist(pm, g.virtual_source)
    rx = math.dist(pm, g.element_positions[k])
    return (tx + rx - g.start_offset) * g.sample_rate / g.speed_of_sound


def project_points(points_wl, g):
    """Vectorised projection: (N, 2) wavelength points to (N, K) arrival samples."""
    pm = _points_m(points_wl, g)
    tx = np.linalg.norm(pm - g.virtual_source, axis=1)
    rx = np.linalg.norm(pm[:, None, :] - g.element_positions[None, :, :], axis=2)
    return (tx[:, None] + rx - g.start_offset) * (g.sample_rate / g.speed_of_sound)


def project_all_channels(p, g):
    """One ``(channel, sample)`` pair per element, tracing the echo hyperbola."""
    samples = project_points([[p.lateral, p.axial]], g)[0]
    return [(float(k), float(s)) for k, s in enumerate(samples)]


def isolate_apex(wavefront, source_index=-1):
    """Apex of a projected wavefront: channel of the earliest arrival and its sample.

    ``np.argmin`` returns the first occurrence, so ties go to the lowest channel.
    """
    w = np.asarray(wavefront, dtype=float)
    if w.size == 0:
        raise ValueError("empty wavefront")
    samples = w[:, 1] if w.ndim == 2 else w
    channels = w[:, 0] if w.ndim == 2 else np.arange(w.size, dtype=float)
    k = int(np.argmin(samples))
    return RfLabel(float(channels[k]), float(samples[k]), source_index)


def apex_points(points_wl, g):
    """Vectorised apex isolation: returns (N, 2) ``(channel, sample)`` labels."""
    s = project_points(points_wl, g)
    k = np.argmin(s, axis=1)
    return np.column_stack([k.astype(float), s[np.arange(s.shape[0]), k]])


def in_aperture(label, g):
    c, s = (label.channel, label.sample) if isinstance(label, RfLabel) else label
    return bool(0 <= c <= g.num_channels - 1 and 0 <= s <= g.num_samples - 1)


def in_aperture_mask(labels, g):
    lab = np.atleast_2d(np.asarray(labels, dtype=float))
    return ((lab[:, 0] >= 0) & (lab[:, 0] <= g.num_channels - 1)
            & (lab[:, 1] >= 0) & (lab[:, 1] <= g.num_samples - 1))
