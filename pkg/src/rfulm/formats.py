"""On-disk formats shared by the CLI stages.

RFB1 (RF frames)::

    b"RFB1" | u32 version=1, F, U, V, A | f32[A] angles (rad)
    | f32[F*U*V*2] interleaved (real, imag)

All little-endian. Samples are stored frame-major as a C-ordered (F, U, V)
array, channel index varying fastest. Frame ``f`` was acquired with angle
``f % A``.

SRN1 (network checkpoint)::

    b"SRN1" | u32 version=1, R, n_layers | u32[n_layers+1] channel counts
    | u32[n_layers*2] kernel (kh, kw) | f32 parameters in declaration order

ULC1 (ULM canvas counts)::

    b"ULC1" | u32 version=1, H, W | u32[H*W] counts
"""

from __future__ import annotations

import csv
import io
import json
import math
import struct

import numpy as np

RFB_MAGIC = b"RFB1"
SRN_MAGIC = b"SRN1"
ULC_MAGIC = b"ULC1"
VERSION = 1


class FormatError(ValueError):
    pass


def write_rfb(path, frames, angles):
    """Write (F, U, V) complex frames tagged with ``angles`` (radians)."""
    frames = np.asarray(frames)
    if frames.ndim != 3:
        raise FormatError("RFB1 expects (F, U, V) frames")
    F, U, V = frames.shape
    angles = np.asarray(angles, dtype="<f4").reshape(-1)
    if len(angles) and F % len(angles):
        raise FormatError("frame count must be a multiple of the angle count")
    inter = np.empty((F, U, V, 2), dtype="<f4")
    inter[..., 0] = frames.real
    inter[..., 1] = frames.imag
    with open(path, "wb") as fh:
        fh.write(RFB_MAGIC)
        fh.write(struct.pack("<5I", VERSION, F, U, V, len(angles)))
        fh.write(angles.tobytes())
        fh.write(inter.tobytes())


def read_rfb(path):
    """Return ``(frames (F, U, V) complex64, angles float64)``."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != RFB_MAGIC:
        raise FormatError(f"{path}: not an RFB1 file")
    version, F, U, V, A = struct.unpack_from("<5I", buf, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported RFB1 version {version}")
    off = 4 + 20
    angles = np.frombuffer(buf, "<f4", A, off).astype(np.float64)
    off += 4 * A
    n = F * U * V * 2
    if len(buf) != off + 4 * n:
        raise FormatError(f"{path}: truncated sample block")
    inter = np.frombuffer(buf, "<f4", n, off).reshape(F, U, V, 2)
    frames = (inter[..., 0] + 1j * inter[..., 1]).astype(np.complex64)
    return frames, angles


def write_sidecar(path, geometry_keys):
    with open(path, "w") as fh:
        json.dump(geometry_keys, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_sidecar(path):
    with open(path) as fh:
        return json.load(fh)


LOC_HEADER = ["frame_index", "space", "angle_deg", "coord1", "coord2", "score"]


def _g9(x):
    return "nan" if isinstance(x, float) and math.isnan(x) else f"{x:.9g}"


def write_localizations(path, rows):
    """Rows of ``(frame_index, space, angle_deg, coord1, coord2, score)``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOC_HEADER)
    for f, space, ang, c1, c2, sc in rows:
        w.writerow([int(f), space, _g9(float(ang)), _g9(float(c1)), _g9(float(c2)), _g9(float(sc))])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def read_localizations(path, space=None):
    """List of ``(frame_index, space, angle_deg, coord1, coord2, score)`` tuples."""
    rows = []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header != LOC_HEADER:
            raise FormatError(f"{path}: unexpected header {header}")
        for line in r:
            if not line:
                continue
            row = (int(line[0]), line[1], float(line[2]), float(line[3]), float(line[4]),
                   float(line[5]))
            if space is None or row[1] == space:
                rows.append(row)
    return rows


def group_by_frame(rows):
    """Frame index -> (N, 2) coordinate array (and scores)."""
    out = {}
    for f, _, _, c1, c2, sc in rows:
        out.setdefault(f, []).append((c1, c2, sc))
    return {f: np.array(v, dtype=float).reshape(-1, 3) for f, v in out.items()}


def write_affine_maps(path, maps):
    """One line per angle: ``angle_deg a11 a12 a13 a21 a22 a23 residual`` (17 significant digits)."""
    lines = ["# angle_deg a11 a12 a13 a21 a22 a23 fit_residual_rms"]
    for m in maps:
        vals = [math.degrees(m.tx_angle), *m.coefficients, m.fit_residual_rms]
        lines.append(" ".join(f"{v:.17g}" for v in vals))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_affine_maps(path):
    from .transform import AffineMap

    maps = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            v = [float(t) for t in line.split()]
            if len(v) != 8:
                raise FormatError(f"{path}: expected 8 fields per map, got {len(v)}")
            maps.append(AffineMap.from_coefficients(v[1:7], tx_angle=math.radians(v[0]),
                                                    fit_residual_rms=v[7]))
    return maps


def write_checkpoint(path, net):
    nl = net.n_layers
    with open(path, "wb") as fh:
        fh.write(SRN_MAGIC)
        fh.write(struct.pack("<3I", VERSION, net.R, nl))
        fh.write(struct.pack(f"<{nl + 1}I", *net.channels))
        fh.write(struct.pack(f"<{2 * nl}I", *[v for k in net.kernel_sizes for v in k]))
        for p in net.params:
            fh.write(np.asarray(p, dtype="<f4").tobytes())


def read_checkpoint(path, dtype=np.float32):
    from .localizer.network import SrNetwork

    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != SRN_MAGIC:
        raise FormatError(f"{path}: not an SRN1 checkpoint")
    version, R, nl = struct.unpack_from("<3I", buf, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported SRN1 version {version}")
    off = 16
    chans = list(struct.unpack_from(f"<{nl + 1}I", buf, off))
    off += 4 * (nl + 1)
    ks = struct.unpack_from(f"<{2 * nl}I", buf, off)
    off += 8 * nl
    if chans[-1] != R * R:
        raise FormatError(f"{path}: last layer has {chans[-1]} planes, expected {R * R}")
    net = SrNetwork(tuple(chans[1:-1]), R, [(ks[2 * i], ks[2 * i + 1]) for i in range(nl)],
                    in_channels=chans[0], dtype=dtype)
    params = []
    for p in net.params:
        arr = np.frombuffer(buf, "<f4", p.size, off).reshape(p.shape)
        off += 4 * p.size
        params.append(arr.astype(dtype))
    if off != len(buf):
        raise FormatError(f"{path}: trailing bytes in checkpoint")
    net.params = params
    return net


def write_loss_csv(path, history):
    with open(path, "w", newline="") as fh:
        fh.write("epoch,mean_loss,lr\n")
        for e, l, lr in history:
            fh.write(f"{e},{l:.9g},{lr:.9g}\n")


def read_loss_csv(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return [(int(r["epoch"]), float(r["mean_loss"]), float(r["lr"])) for r in rows]


def write_canvas(path, counts):
    counts = np.asarray(counts)
    H, W = counts.shape
    with open(path, "wb") as fh:
        fh.write(ULC_MAGIC)
        fh.write(struct.pack("<3I", VERSION, H, W))
        fh.write(counts.astype("<u4").tobytes())


def read_canvas(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != ULC_MAGIC:
        raise FormatError(f"{path}: not a ULC1 canvas")
    version, H, W = struct.unpack_from("<3I", buf, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported ULC1 version {version}")
    return np.frombuffer(buf, "<u4", H * W, 16).reshape(H, W).astype(np.int64)
