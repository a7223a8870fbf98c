"""Time the compiled kernels against the NumPy fallback on desk-scale inputs.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from rfulm import _kernels_py

try:
    from rfulm import _kernels as compiled
except ImportError:  # extension not built
    compiled = None


def cases(rng):
    x = rng.normal(size=(4, 128, 32, 16))
    cols = _kernels_py.im2col(x, 3, 3)
    data = rng.normal(size=(128, 32)) + 1j * rng.normal(size=(128, 32))
    delays = rng.uniform(-5, 135, (11 * 17, 32))
    weights = (rng.random((11 * 17, 32)) > 0.3).astype(float)
    heat = rng.normal(size=(512, 128))
    return {
        "im2col 4x128x32x16": ("im2col", (x, 3, 3)),
        "col2im 4x128x32x16": ("col2im", (cols, 4, 128, 32, 16, 3, 3)),
        "das_sum 187 px x 32 ch": ("das_sum", (data, delays, weights)),
        "nms 512x128 w=3": ("nms", (heat, 3)),
    }


def best_of(fn, args, repeat):
    t = timeit.Timer(lambda: fn(*args))
    n, _ = t.autorange()
    return min(t.repeat(repeat, n)) / n


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':<26}{'python [ms]':>13}{'cython [ms]':>13}{'speedup':>10}")
    for name, (fn, fargs) in cases(rng).items():
        tp = best_of(getattr(_kernels_py, fn), fargs, args.repeat)
        if compiled is None:
            print(f"{name:<26}{tp * 1e3:>13.3f}{'n/a':>13}{'':>10}")
            continue
        tc = best_of(getattr(compiled, fn), fargs, args.repeat)
        print(f"{name:<26}{tp * 1e3:>13.3f}{tc * 1e3:>13.3f}{tp / tc:>9.1f}x")


if __name__ == "__main__":
    main()
