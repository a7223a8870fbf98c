"""Small sub-pixel convolutional localizer with hand-written backpropagation.

Activations are kept channel-last, ``(batch, rows, cols, channels)``, so each
convolution is a single matrix product over an im2col patch matrix.
"""

from __future__ import annotations

import numpy as np

from .. import kernels


def pixel_shuffle(planes):
    """Rearrange ``(R*R, U, V)`` planes into a ``(R*U, R*V)`` image.

    Plane ``r1 * R + r2`` fills output offsets ``(r1, r2)`` of every R x R cell.
    """
    planes = np.asarray(planes)
    c, U, V = planes.shape
    R = int(round(np.sqrt(c)))
    if R * R != c:
        raise ValueError(f"channel count {c} is not a perfect square")
    return planes.reshape(R, R, U, V).transpose(2, 0, 3, 1).reshape(R * U, R * V)


def pixel_unshuffle(image, R):
    """Inverse of :func:`pixel_shuffle`."""
    H, W = image.shape
    if H % R or W % R:
        raise ValueError("image size is not divisible by R")
    U, V = H // R, W // R
    return image.reshape(U, R, V, R).transpose(1, 3, 0, 2).reshape(R * R, U, V)


def _shuffle_hwc(y, R):
    B, U, V, _ = y.shape
    return y.reshape(B, U, V, R, R).transpose(0, 1, 3, 2, 4).reshape(B, R * U, R * V)


def _unshuffle_hwc(g, R):
    B, H, W = g.shape
    U, V = H // R, W // R
    return np.ascontiguousarray(g.reshape(B, U, R, V, R).transpose(0, 1, 3, 2, 4)).reshape(B, U, V, R * R)


def _ksize(k):
    return (k, k) if np.isscalar(k) else tuple(int(v) for v in k)


class SrNetwork:
    """Conv stack ``in -> widths... -> R*R`` with ReLU between layers and a pixel shuffle.

    Weights are stored as ``(kh, kw, c_in, c_out)`` arrays, biases as
    ``(c_out,)``; :attr:`params` lists them as ``[W0, b0, W1, b1, ...]``.
    """

    def __init__(self, widths=(32, 32, 32), R=4, kernels_=3, in_channels=2, seed=0,
                 dtype=np.float32):
        self.R = int(R)
        self.dtype = np.dtype(dtype)
        chans = [in_channels, *widths, self.R * self.R]
        nl = len(chans) - 1
        # a list gives one size per layer; an int or (kh, kw) tuple applies to all
        ks = kernels_ if isinstance(kernels_, list) else [kernels_] * nl
        if len(ks) != nl:
            raise ValueError(f"{len(ks)} kernel sizes for {nl} layers")
        self.kernel_sizes = [_ksize(k) for k in ks]
        self.channels = chans
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.params = []
        for i in range(nl):
            kh, kw = self.kernel_sizes[i]
            fan_in = kh * kw * chans[i]
            W = rng.standard_normal((kh, kw, chans[i], chans[i + 1])) * np.sqrt(2.0 / fan_in)
            self.params.append(W.astype(self.dtype))
            self.params.append(np.zeros(chans[i + 1], dtype=self.dtype))

    @property
    def n_layers(self):
        return len(self.kernel_sizes)

    @property
    def n_params(self):
        return int(sum(p.size for p in self.params))

    def copy(self):
        other = object.__new__(SrNetwork)
        other.__dict__.update(self.__dict__)
        other.kernel_sizes = list(self.kernel_sizes)
        other.channels = list(self.channels)
        other.params = [p.copy() for p in self.params]
        return other

    def astype(self, dtype):
        other = self.copy()
        other.dtype = np.dtype(dtype)
        other.params = [p.astype(dtype) for p in other.params]
        return other

    def _as_batch(self, x):
        x = np.asarray(x)
        if x.ndim == 3 and x.shape[0] == self.channels[0]:
            x = x.transpose(1, 2, 0)[None]
        elif x.ndim == 4 and x.shape[1] == self.channels[0] and x.shape[-1] != self.channels[0]:
            x = x.transpose(0, 2, 3, 1)
        if x.ndim != 4 or x.shape[-1] != self.channels[0]:
            raise ValueError(f"expected (2, U, V) or (B, U, V, 2) input, got {x.shape}")
        return np.ascontiguousarray(x, dtype=self.dtype)

    def forward(self, x, cache=False):
        """Heatmaps ``(B, R*U, R*V)`` for inputs ``(B, U, V, 2)`` or one ``(2, U, V)`` frame."""
        single = np.asarray(x).ndim == 3
        a = self._as_batch(x)
        B, U, V, _ = a.shape
        saved = []
        for i in range(self.n_layers):
            kh, kw = self.kernel_sizes[i]
            W, b = self.params[2 * i], self.params[2 * i + 1]
            cols = kernels.im2col(a, kh, kw)
            z = cols @ W.reshape(-1, W.shape[-1]) + b
            last = i == self.n_layers - 1
            if cache:
                saved.append((cols, z if not last else None))
            a = z if last else np.maximum(z, 0)
            if not np.all(np.isfinite(a)):
                raise FloatingPointError(f"non-finite activation in layer {i}")
            a = a.reshape(B, U, V, -1)
        out = _shuffle_hwc(a, self.R)
        if cache:
            return out, (saved, (B, U, V))
        return out[0] if single else out

    def backward(self, state, grad_out):
        """Parameter gradients given ``dLoss/dOutput`` of shape ``(B, R*U, R*V)``."""
        saved, (B, U, V) = state
        grads = [None] * len(self.params)
        g = _unshuffle_hwc(np.asarray(grad_out, dtype=self.dtype), self.R).reshape(B * U * V, -1)
        for i in reversed(range(self.n_layers)):
            kh, kw = self.kernel_sizes[i]
            W = self.params[2 * i]
            cols, _ = saved[i]
            grads[2 * i] = (cols.T @ g).reshape(W.shape)
            grads[2 * i + 1] = g.sum(axis=0)
            if i == 0:
                break
            dcols = g @ W.reshape(-1, W.shape[-1]).T
            da = kernels.col2im(np.ascontiguousarray(dcols), B, U, V, self.channels[i], kh, kw)
            z_prev = saved[i - 1][1]
            g = da.reshape(B * U * V, -1) * (z_prev > 0)
        for k, gr in enumerate(grads):
            if not np.all(np.isfinite(gr)):
                raise FloatingPointError(f"non-finite gradient for parameter {k}")
        return grads
