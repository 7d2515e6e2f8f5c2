"""Compare the compiled and numpy CountSketch kernels.

    python benchmarks/bench_kernels.py [--repeats 5]

Prints the median wall time per call for each backend and the speedup,
and checks that both produce identical bits.
"""

import argparse
import timeit

import numpy as np

from stiefel_sketch import _pykernels

try:
    from stiefel_sketch import _ckernels
except ImportError:
    _ckernels = None

SHAPES = [(5000, 40, 400), (50000, 40, 4000), (200000, 100, 10000), (20000, 500, 5000)]


def bench(fn, Z, h, g, s, repeats):
    t = timeit.repeat(lambda: fn(Z, h, g, s), number=1, repeat=repeats)
    return float(np.median(t))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    if _ckernels is None:
        print("compiled kernel not built; run `pip install -e . --no-build-isolation` first")
    rng = np.random.default_rng(0)
    print(f"{'n':>8} {'d':>5} {'s':>6} {'numpy [ms]':>11} {'cython [ms]':>12} {'speedup':>8}")
    for n, d, s in SHAPES:
        Z = rng.standard_normal((n, d))
        h = rng.integers(0, s, size=n, dtype=np.int64)
        g = rng.integers(0, 2, size=n).astype(np.float64) * 2 - 1
        tp = bench(_pykernels.countsketch_apply, Z, h, g, s, args.repeats)
        if _ckernels is None:
            print(f"{n:>8} {d:>5} {s:>6} {1e3 * tp:>11.2f} {'-':>12} {'-':>8}")
            continue
        tc = bench(_ckernels.countsketch_apply, Z, h, g, s, args.repeats)
        same = np.array_equal(_pykernels.countsketch_apply(Z, h, g, s), _ckernels.countsketch_apply(Z, h, g, s))
        print(f"{n:>8} {d:>5} {s:>6} {1e3 * tp:>11.2f} {1e3 * tc:>12.2f} {tp / tc:>7.1f}x" + ("" if same else "  MISMATCH"))


if __name__ == "__main__":
    main()
