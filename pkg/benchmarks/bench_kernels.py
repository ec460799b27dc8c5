"""Time the compiled TS-FIS kernels against the NumPy fallback.

Usage: python benchmarks/bench_kernels.py [--rows N] [--repeat R]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from iminer import _kernels_py

try:
    from iminer import _kernels as compiled
except ImportError:
    compiled = None


def problem(rows: int, seed: int = 0):
    """Hourly-sized workload: 4 inputs, 3 MFs each, the full 81-rule grid."""
    rng = np.random.default_rng(seed)
    grid = np.stack(np.meshgrid(*[np.arange(3)] * 4, indexing="ij"), -1).reshape(-1, 4)
    masks = np.zeros((81, 4, 3), dtype=np.uint8)
    masks[np.arange(81)[:, None], np.arange(4), grid] = 1
    return (rng.uniform(0, 1, (rows, 4)), rng.uniform(0, 1, rows), np.tile([0.0, 0.5, 1.0], (4, 1)),
            np.full((4, 3), 0.25), masks, rng.normal(size=(81, 5)), 1.3)


def bench(mod, X, d, c, s, m, k, p, repeat):
    fwd = min(timeit.repeat(lambda: mod.fis_forward(X, c, s, m, k, p), number=1, repeat=repeat))
    grad = min(timeit.repeat(lambda: mod.fis_gradients(X, d, c, s, m, k, p), number=1, repeat=repeat))
    return fwd, grad


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=4152)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    X, d, c, s, m, k, p = problem(args.rows)
    py = bench(_kernels_py, X, d, c, s, m, k, p, args.repeat)
    print(f"rows={args.rows} rules=81 best of {args.repeat}")
    print(f"{'backend':<8} {'forward ms':>11} {'gradients ms':>13}")
    print(f"{'numpy':<8} {py[0] * 1e3:>11.2f} {py[1] * 1e3:>13.2f}")
    if compiled is None:
        print("compiled extension not built")
        return
    cy = bench(compiled, X, d, c, s, m, k, p, args.repeat)
    print(f"{'cython':<8} {cy[0] * 1e3:>11.2f} {cy[1] * 1e3:>13.2f}")
    print(f"speed-up: forward {py[0] / cy[0]:.1f}x, gradients {py[1] / cy[1]:.1f}x")
    y1, y2 = _kernels_py.fis_forward(X, c, s, m, k, p)[0], compiled.fis_forward(X, c, s, m, k, p)[0]
    print(f"max |difference| in outputs: {np.max(np.abs(y1 - y2)):.2e}")


if __name__ == "__main__":
    main()
