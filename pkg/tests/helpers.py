"""Shared oracles for the test suite."""

import numpy as np

from rfulm.localizer import SrNetwork, build_target, loss_grad


def kink_margin(net, x):
    """Smallest |pre-activation| or |output|: distance to a ReLU or L1 kink."""
    out, (saved, _) = net.forward(x, cache=True)
    zs = [np.abs(z).min() for _, z in saved if z is not None]
    return min(zs + [np.abs(out).min()])


def toy_problem(widths=(8, 8, 8), R=2, size=8, seed=0, lambda1=1e-2, margin=1e-2):
    """Random float64 net and input whose activations stay ``margin`` away from kinks,
    so central differences never straddle a non-differentiable point."""
    target = build_target([[2.3, 3.6], [5.0, 6.2]], R, 1.0, (size, size))
    for s in range(seed, seed + 10_000):
        rng = np.random.default_rng(s)
        net = SrNetwork(widths, R, 3, seed=s, dtype=np.float64)
        for i in range(1, len(net.params), 2):
            net.params[i] = rng.normal(0, 0.1, net.params[i].shape)
        x = rng.uniform(-1, 1, (1, size, size, 2))
        if kink_margin(net, x) > margin:
            return net, x, target, lambda1
    raise RuntimeError("no kink-free toy problem found")


def analytic_grads(net, x, target, lambda1):
    out, state = net.forward(x, cache=True)
    return net.backward(state, loss_grad(out, target.values[None], lambda1))


def loss_difference(op, om, t, lambda1):
    """loss(op) - loss(om) rearranged so the large common terms cancel exactly."""
    return float(np.sum((op - om) * (op + om - 2 * t)) + lambda1 * np.sum(np.abs(op) - np.abs(om)))


def numeric_grads(net, x, target, lambda1, h=1e-4):
    grads = []
    for p in net.params:
        g = np.zeros_like(p)
        flat, gf = p.reshape(-1), g.reshape(-1)
        for j in range(flat.size):
            old = flat[j]
            flat[j] = old + h
            op = net.forward(x)[0]
            flat[j] = old - h
            om = net.forward(x)[0]
            flat[j] = old
            gf[j] = loss_difference(op, om, target.values, lambda1) / (2 * h)
        grads.append(g)
    return grads


def max_relative_error(a, b, floor=1e-6):
    a = np.concatenate([v.ravel() for v in a])
    b = np.concatenate([v.ravel() for v in b])
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))
