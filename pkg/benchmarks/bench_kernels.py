"""Compiled kernels against their numpy/pure-Python twins.

    python benchmarks/bench_kernels.py [--repeat 3]
"""

import argparse
import time

import numpy as np

from acimtools import _kernels_py
from acimtools.kernels import KIND_EXAMPLE1

try:
    from acimtools import _kernels
except ImportError:
    _kernels = None


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases():
    rng = np.random.default_rng(0)
    r = 0.2 * np.sqrt(rng.random(20000))
    th = rng.random(20000) * 2 * np.pi
    X = np.ascontiguousarray(np.column_stack((r * np.cos(th), r * np.sin(th))))
    w = np.full(2, 1 / 0.04)
    x0 = np.array([0.2, 0.0])
    return {
        "escape_local (2e4 points, Example 1)": lambda k: k.escape_local(KIND_EXAMPLE1, X.copy(), 2.0, 1.0, w, 5000),
        "inverse_orbit (1e4 steps, Example 1)": lambda k: k.inverse_orbit(KIND_EXAMPLE1, x0, 2.0, 1.0, 10000, 1e-14,
                                                                          200),
        "orbit_histogram_1d (1e6 steps)": lambda k: k.orbit_histogram_1d(0.3, 0.5, 1.0, 0.5698402909980532, 10**6,
                                                                        1000, 0.25, 1.0, 256),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    print(f"{'kernel':42s} {'compiled [s]':>13s} {'python [s]':>11s} {'speedup':>8s}")
    for name, call in cases().items():
        tp, out_p = _time(lambda: call(_kernels_py), args.repeat)
        if _kernels is None:
            print(f"{name:42s} {'n/a':>13s} {tp:11.4f} {'':>8s}")
            continue
        tc, out_c = _time(lambda: call(_kernels), args.repeat)
        a = out_c[0] if isinstance(out_c, tuple) else out_c
        b = out_p[0] if isinstance(out_p, tuple) else out_p
        same = np.allclose(np.asarray(a), np.asarray(b), rtol=1e-12, atol=0)
        print(f"{name:42s} {tc:13.4f} {tp:11.4f} {tp / tc:7.1f}x{'' if same else '  (MISMATCH)'}")


if __name__ == "__main__":
    main()
