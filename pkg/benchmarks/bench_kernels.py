#!/usr/bin/env python3
"""Benchmark the hot kernels: numba-compiled vs pure-numpy fallback.

Usage:
    python benchmarks/bench_kernels.py [--sizes 50,100,200] [--repeats 5]

The same comparison applies end to end: run any simulation with
CURBSIM_NUMBA=0 to force the numpy path.
"""
import argparse
import time

import numpy as np

from curbsim._accel import NUMBA_ENABLED
from curbsim.matching import solve_dense
from curbsim.strategies import capture_prob_table, oracle_cost_matrix


def time_fn(fn, repeats):
    fn()  # warm-up (includes JIT compilation for the numba path)
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_assignment(sizes, repeats):
    rng = np.random.default_rng(0)
    print("assignment solver (n x n random costs, 20% infeasible)")
    print(f"{'n':>6} {'numpy':>12} {'numba':>12} {'speedup':>9}")
    for n in sizes:
        m = rng.uniform(0, 100, (n, n))
        m[rng.random((n, n)) < 0.2] = np.inf
        t_np = time_fn(lambda: solve_dense(m, compiled=False), repeats)
        if NUMBA_ENABLED:
            t_nb = time_fn(lambda: solve_dense(m, compiled=True), repeats)
            print(f"{n:>6} {t_np * 1e3:>10.2f}ms {t_nb * 1e3:>10.2f}ms {t_np / t_nb:>8.1f}x")
        else:
            print(f"{n:>6} {t_np * 1e3:>10.2f}ms {'n/a':>12} {'':>9}")


def bench_oracle_matrix(repeats):
    rng = np.random.default_rng(1)
    print("\noracle cost matrix (participants x cells, competitors in context)")
    print(f"{'nd x nf x nc':>16} {'numpy':>12} {'numba':>12} {'speedup':>9}")
    table = capture_prob_table(1, 44)
    for nd, nf, nc in ((20, 50, 100), (50, 100, 400), (150, 200, 1000)):
        d = rng.integers(0, 22, (nd, 2))
        f = rng.integers(0, 22, (nf, 2))
        c = rng.integers(0, 22, (nc, 2))
        t_np = time_fn(lambda: oracle_cost_matrix(d, f, c, 1, table, compiled=False), repeats)
        label = f"{nd}x{nf}x{nc}"
        if NUMBA_ENABLED:
            t_nb = time_fn(lambda: oracle_cost_matrix(d, f, c, 1, table, compiled=True), repeats)
            print(f"{label:>16} {t_np * 1e3:>10.2f}ms {t_nb * 1e3:>10.2f}ms {t_np / t_nb:>8.1f}x")
        else:
            print(f"{label:>16} {t_np * 1e3:>10.2f}ms {'n/a':>12} {'':>9}")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="50,100,200")
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]
    print(f"numba available and enabled: {NUMBA_ENABLED}\n")
    bench_assignment(sizes, args.repeats)
    bench_oracle_matrix(args.repeats)


if __name__ == "__main__":
    main()
