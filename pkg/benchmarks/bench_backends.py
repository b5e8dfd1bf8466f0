"""Time the numba kernels against the numpy fallback.

Run from the repository root::

    python3 benchmarks/bench_backends.py [--repeat 3]

Numba compile time is paid once in a warm-up call and not counted.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from pulse_ilp import kernels
from pulse_ilp.dynamics import Solver, SolverConfig
from pulse_ilp.experiments import planted_trial
from pulse_ilp.oracle import exhaustive_solve


def solve_batch(m, n, r, trials):
    solved = 0
    for t in range(trials):
        inst, _ = planted_trial(0, m, n, r, t)
        solved += Solver(inst).run(SolverConfig(seed=t)).solved
    return solved


def oracle_batch(m, n, r, trials):
    for t in range(trials):
        inst, _ = planted_trial(0, m, n, r, t)
        exhaustive_solve(inst)


CASES = [
    ("solve 200x (3,5,10)", lambda: solve_batch(3, 5, 10, 200)),
    ("solve 100x (5,12,10)", lambda: solve_batch(5, 12, 10, 100)),
    ("oracle 5x (3,16,10)", lambda: oracle_batch(3, 16, 10, 5)),
    ("oracle 1x (3,22,10)", lambda: oracle_batch(3, 22, 10, 1)),
]


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    backends = kernels.available_backends()
    if "numba" not in backends:
        print("numba is not installed; nothing to compare")
        return
    print(f"{'case':<24}{'numpy s':>10}{'numba s':>10}{'speedup':>9}")
    for name, fn in CASES:
        row = {}
        for b in backends:
            with kernels.use_backend(b):
                fn()  # warm-up (JIT compile, caches)
                row[b] = best_of(fn, args.repeat)
        print(f"{name:<24}{row['numpy']:>10.3f}{row['numba']:>10.3f}{row['numpy'] / row['numba']:>8.1f}x")

    # same answers either way
    inst, _ = planted_trial(0, 3, 14, 10, 0)
    sols = {}
    for b in backends:
        with kernels.use_backend(b):
            sols[b] = exhaustive_solve(inst).solutions
    assert np.array_equal(sols["numba"], sols["numpy"])


if __name__ == "__main__":
    main()
