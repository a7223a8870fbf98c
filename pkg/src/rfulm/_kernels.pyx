# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Signatures mirror :mod:`rfulm._kernels_py`."""

import numpy as np
cimport numpy as cnp

ctypedef fused real_t:
    float
    double


def im2col(real_t[:, :, :, ::1] x, int kh, int kw):
    """Same-padded patch matrix of a (B, H, W, C) tensor, columns ordered (dy, dx, c)."""
    cdef Py_ssize_t B = x.shape[0], H = x.shape[1], W = x.shape[2], C = x.shape[3]
    cdef int ph = kh // 2, pw = kw // 2
    dtype = np.float32 if real_t is float else np.float64
    out_arr = np.zeros((B * H * W, kh * kw * C), dtype=dtype)
    cdef real_t[:, ::1] out = out_arr
    cdef Py_ssize_t b, i, j, c, row, col
    cdef int dy, dx, si, sj
    for b in range(B):
        for i in range(H):
            for j in range(W):
                row = (b * H + i) * W + j
                col = 0
                for dy in range(kh):
                    si = i + dy - ph
                    for dx in range(kw):
                        sj = j + dx - pw
                        if 0 <= si < H and 0 <= sj < W:
                            for c in range(C):
                                out[row, col + c] = x[b, si, sj, c]
                        col += C
    return out_arr


def col2im(real_t[:, ::1] cols, Py_ssize_t B, Py_ssize_t H, Py_ssize_t W, Py_ssize_t C,
           int kh, int kw):
    """Adjoint of :func:`im2col`: scatter-add patch rows back into (B, H, W, C)."""
    cdef int ph = kh // 2, pw = kw // 2
    dtype = np.float32 if real_t is float else np.float64
    out_arr = np.zeros((B, H, W, C), dtype=dtype)
    cdef real_t[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, i, j, c, row, col
    cdef int dy, dx, si, sj
    for b in range(B):
        for i in range(H):
            for j in range(W):
                row = (b * H + i) * W + j
                col = 0
                for dy in range(kh):
                    si = i + dy - ph
                    for dx in range(kw):
                        sj = j + dx - pw
                        if 0 <= si < H and 0 <= sj < W:
                            for c in range(C):
                                out[b, si, sj, c] += cols[row, col + c]
                        col += C
    return out_arr


def das_sum(double complex[:, ::1] data, double[:, ::1] delays, double[:, ::1] weights):
    """Per-pixel sum of linearly interpolated channel samples.

    data is (U, V); delays and weights are (P, V) in fractional samples.
    Delays outside [0, U-1] contribute nothing.
    """
    cdef Py_ssize_t U = data.shape[0], V = data.shape[1], P = delays.shape[0]
    out_arr = np.zeros(P, dtype=np.complex128)
    cdef double complex[::1] out = out_arr
    cdef Py_ssize_t p, k, i0
    cdef double d, w, frac
    cdef double complex acc
    for p in range(P):
        acc = 0
        for k in range(V):
            w = weights[p, k]
            if w == 0.0:
                continue
            d = delays[p, k]
            if d < 0.0 or d > U - 1:
                continue
            i0 = <Py_ssize_t>d
            if i0 >= U - 1:
                acc = acc + w * data[U - 1, k]
                continue
            frac = d - i0
            acc = acc + w * ((1.0 - frac) * data[i0, k] + frac * data[i0 + 1, k])
        out[p] = acc
    return out_arr


def nms(double[:, ::1] heat, int window):
    """Boolean mask of window maxima; ties resolve to the first pixel in row-major order."""
    cdef Py_ssize_t H = heat.shape[0], W = heat.shape[1]
    cdef int r = window // 2
    keep_arr = np.zeros((H, W), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] keep = keep_arr
    cdef Py_ssize_t i, j, a, b, a0, a1, b0, b1
    cdef double v
    cdef int ok
    for i in range(H):
        a0 = i - r if i >= r else 0
        a1 = i + r + 1 if i + r + 1 <= H else H
        for j in range(W):
            v = heat[i, j]
            if r == 1 and 0 < i < H - 1 and 0 < j < W - 1:
                # unrolled 3x3 interior case
                keep[i, j] = ((heat[i - 1, j - 1] < v) & (heat[i - 1, j] < v)
                              & (heat[i - 1, j + 1] < v) & (heat[i, j - 1] < v)
                              & (heat[i, j + 1] <= v) & (heat[i + 1, j - 1] <= v)
                              & (heat[i + 1, j] <= v) & (heat[i + 1, j + 1] <= v))
                continue
            b0 = j - r if j >= r else 0
            b1 = j + r + 1 if j + r + 1 <= W else W
            # branchless: earlier neighbours in row-major order win ties, later ones do not
            ok = 1
            for a in range(a0, i):
                for b in range(b0, b1):
                    ok &= heat[a, b] < v
            for b in range(b0, j):
                ok &= heat[i, b] < v
            for b in range(j + 1, b1):
                ok &= heat[i, b] <= v
            for a in range(i + 1, a1):
                for b in range(b0, b1):
                    ok &= heat[a, b] <= v
            keep[i, j] = ok
    return keep_arr.view(bool)
