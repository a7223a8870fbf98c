"""Adam training loop with cosine-annealed learning rate and RF augmentation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..signal import RfFrame, add_clutter_noise, normalize_amplitude
from .network import SrNetwork
from .target import build_target, loss, loss_grad

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    batch_size: int = 4
    weight_decay: float = 1e-8
    lr_init: float = 1e-3
    max_epochs: int = 40
    lambda1: float = 1e-2
    sigma: float = 1.0
    R: int = 4
    normalize: bool = True
    clutter_db: float = 50.0
    seed: int = 0
    widths: tuple = (32, 32, 32)
    kernel: object = 3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.R not in (2, 4, 8, 10):
            raise ValueError("R must be one of 2, 4, 8, 10")
        for name in ("batch_size", "lr_init", "sigma"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("weight_decay", "lambda1", "max_epochs"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


def cosine_lr(epoch, cfg):
    """Learning rate for ``epoch``, annealed from ``lr_init`` to 0 at ``max_epochs``."""
    if cfg.max_epochs == 0:
        return cfg.lr_init
    return cfg.lr_init * 0.5 * (1.0 + math.cos(math.pi * epoch / cfg.max_epochs))


@dataclass
class Adam:
    params: list
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def __post_init__(self):
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads, lr):
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if self.weight_decay:
                g = g + self.weight_decay * p
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= (lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)).astype(p.dtype)


def prepare_input(frame, cfg=None, clutter_seed=None):
    """Augment/normalise one frame and return the ``(U, V, 2)`` network input."""
    f = frame if isinstance(frame, RfFrame) else RfFrame(np.asarray(frame))
    if cfg is not None and clutter_seed is not None and math.isfinite(cfg.clutter_db) \
            and np.any(f.data):
        f = add_clutter_noise(f, cfg.clutter_db, clutter_seed)
    if cfg is None or cfg.normalize:
        f = normalize_amplitude(f)
    return np.stack([f.data.real, f.data.imag], axis=-1)


def batch_loss_and_grads(net, xb, targets, lambda1):
    """Mean per-sample loss over the batch and its parameter gradients."""
    out, state = net.forward(xb, cache=True)
    B = out.shape[0]
    losses = [loss(out[i], targets[i], lambda1) for i in range(B)]
    gout = np.stack([loss_grad(out[i], targets[i].values, lambda1) for i in range(B)]) / B
    grads = net.backward(state, gout)
    return float(np.mean(losses)), grads, losses


def train(frames, labels, cfg, net=None, progress=None):
    """Train a localizer on RF frames with ``(channel, sample)`` labels.

    Returns ``(net, history)`` where history rows are ``(epoch, mean_loss, lr)``.
    """
    frames = list(frames)
    if not frames:
        raise ValueError("need at least one training frame")
    if len(labels) != len(frames):
        raise ValueError("one label array per frame required")
    shape = (frames[0].data if isinstance(frames[0], RfFrame) else np.asarray(frames[0])).shape
    if net is None:
        net = SrNetwork(cfg.widths, cfg.R, cfg.kernel, seed=cfg.seed)
    targets = [build_target(lab, cfg.R, cfg.sigma, shape) for lab in labels]
    for t in targets:
        t.values.flags.writeable = False
    opt = Adam(net.params, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed)
    history = []
    n = len(frames)
    for epoch in range(cfg.max_epochs):
        lr = cosine_lr(epoch, cfg)
        order = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, cfg.batch_size):
            idx = np.sort(order[start:start + cfg.batch_size])
            xb = np.stack([
                prepare_input(frames[i], cfg, clutter_seed=(cfg.seed, epoch, int(i)))
                for i in idx
            ])
            mean_loss, grads, losses = batch_loss_and_grads(net, xb, [targets[i] for i in idx],
                                                            cfg.lambda1)
            if not math.isfinite(mean_loss):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}, batch starting {start}")
            opt.step(grads, lr)
            epoch_losses.extend(losses)
        mean = float(np.mean(epoch_losses))
        history.append((epoch, mean, lr))
        log.info("epoch %d loss %.6g lr %.3g", epoch, mean, lr)
        if progress is not None:
            progress(epoch, mean, lr)
    return net, history


def predict(net, frames, cfg=None, batch_size=8):
    """Heatmaps for a sequence of frames, normalised like the training inputs."""
    out = []
    frames = list(frames)
    for s in range(0, len(frames), batch_size):
        xb = np.stack([prepare_input(f, cfg) for f in frames[s:s + batch_size]])
        out.append(net.forward(xb))
    if not out:
        return np.zeros((0,))
    return np.concatenate(out).astype(np.float64)
