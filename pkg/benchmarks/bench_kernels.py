"""Compiled kernels against the pure-Python fallback.

Run with ``python benchmarks/bench_kernels.py``.  Without the compiled
extension only the fallback timings are printed.
"""
import argparse
import timeit

import numpy as np

from kpolab import _fallback
from kpolab.classical import drive_coefficient

try:
    from kpolab import _kernels as compiled
except ImportError:
    compiled = None


def cases(n_points, n_trunc):
    rng = np.random.default_rng(0)
    alpha = (rng.normal(size=n_points) + 1j * rng.normal(size=n_points)) * 3
    q, p = rng.normal(size=(2, 50 * n_points)) * 3
    yield "coherent_amplitudes", lambda m: m.coherent_amplitudes(alpha, n_trunc)
    yield "energy_batch", lambda m: m.energy_batch(q, p, 3, 1.2, drive_coefficient(3, 0.4))


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--points", type=int, default=20_000)
    ap.add_argument("--n-trunc", type=int, default=300)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"{'kernel':22s} {'python [ms]':>12s} {'cython [ms]':>12s} {'speedup':>8s}")
    for name, call in cases(args.points, args.n_trunc):
        t_py = best(lambda: call(_fallback), args.repeat)
        if compiled is None:
            print(f"{name:22s} {1e3 * t_py:12.2f} {'n/a':>12s} {'n/a':>8s}")
            continue
        t_cy = best(lambda: call(compiled), args.repeat)
        print(f"{name:22s} {1e3 * t_py:12.2f} {1e3 * t_cy:12.2f} {t_py / t_cy:8.2f}")


if __name__ == "__main__":
    main()
