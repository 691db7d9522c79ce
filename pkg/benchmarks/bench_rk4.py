"""Compare the numba RK4 kernel with the pure-numpy fallback.

Usage: python benchmarks/bench_rk4.py [--T 20] [--dt 1e-3] [--repeat 3]

The numba timing excludes the first (compiling) call, which is reported
separately.
"""

import argparse
import time

import numpy as np

from mechlin import _kernels
from mechlin.io import load_system
from mechlin.simulator import SineSignal, closed_loop, integrate
from mechlin.synthesis import linearize

CASES = {
    "iwp": [0.3, 0.5, 0.2, -0.3],
    "tora3": [0.0, 0.0, -1.15, 0.0, 0.0, 2.2],
}


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--T", type=float, default=2.0)
    ap.add_argument("--dt", type=float, default=1e-3)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not _kernels.HAVE_NUMBA:
        print("numba is not installed; only the numpy path is available")
    print(f"T={args.T} dt={args.dt} steps={int(round(args.T / args.dt))}")
    print(f"{'system':8} {'numpy [s]':>10} {'numba [s]':>10} {'compile [s]':>12} {'speedup':>8} {'max diff':>10}")
    for name, z0 in CASES.items():
        s = load_system(name)
        tr = linearize(s)
        u = closed_loop(tr.feedback, SineSignal(0.1, 1.0))
        run = lambda jit: integrate(s, z0, u, args.T, args.dt, use_numba=jit)
        ref = run(False)
        t_np = best_of(lambda: run(False), args.repeat)
        if _kernels.HAVE_NUMBA:
            t = time.perf_counter()
            fast = run(True)
            t_compile = time.perf_counter() - t
            t_nb = best_of(lambda: run(True), args.repeat)
            diff = float(np.max(np.abs(fast.states - ref.states)))
            print(f"{name:8} {t_np:10.4f} {t_nb:10.4f} {t_compile:12.2f} {t_np / t_nb:8.1f} {diff:10.2e}")
        else:
            print(f"{name:8} {t_np:10.4f} {'-':>10} {'-':>12} {'-':>8} {'-':>10}")


if __name__ == "__main__":
    main()
