"""NumPy implementations of the compiled kernels in ``_kernels.pyx``."""

import numpy as np


def im2col(x, kh, kw):
    B, H, W, C = x.shape
    ph, pw = kh // 2, kw // 2
    xp = np.zeros((B, H + kh - 1, W + kw - 1, C), dtype=x.dtype)
    xp[:, ph:ph + H, pw:pw + W, :] = x
    cols = np.empty((B, H, W, kh, kw, C), dtype=x.dtype)
    for dy in range(kh):
        for dx in range(kw):
            cols[:, :, :, dy, dx, :] = xp[:, dy:dy + H, dx:dx + W, :]
    return cols.reshape(B * H * W, kh * kw * C)


def col2im(cols, B, H, W, C, kh, kw):
    ph, pw = kh // 2, kw // 2
    cols = cols.reshape(B, H, W, kh, kw, C)
    xp = np.zeros((B, H + kh - 1, W + kw - 1, C), dtype=cols.dtype)
    for dy in range(kh):
        for dx in range(kw):
            xp[:, dy:dy + H, dx:dx + W, :] += cols[:, :, :, dy, dx, :]
    return np.ascontiguousarray(xp[:, ph:ph + H, pw:pw + W, :])


def das_sum(data, delays, weights):
    U, V = data.shape
    valid = (delays >= 0.0) & (delays <= U - 1) & (weights != 0.0)
    d = np.where(valid, delays, 0.0)
    i0 = np.minimum(np.floor(d).astype(np.int64), U - 2) if U > 1 else np.zeros_like(d, dtype=np.int64)
    frac = d - i0
    k = np.broadcast_to(np.arange(V), d.shape)
    if U > 1:
        samples = (1.0 - frac) * data[i0, k] + frac * data[i0 + 1, k]
    else:
        samples = data[i0, k]
    return np.sum(np.where(valid, weights * samples, 0.0), axis=1)


def nms(heat, window):
    H, W = heat.shape
    r = window // 2
    pad = np.pad(heat, r, mode="constant", constant_values=-np.inf)
    keep = np.ones((H, W), dtype=bool)
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            if dy == 0 and dx == 0:
                continue
            other = pad[r + dy:r + dy + H, r + dx:r + dx + W]
            earlier = dy < 0 or (dy == 0 and dx < 0)
            if earlier:
                keep &= heat > other
            else:
                keep &= heat >= other
    return keep
