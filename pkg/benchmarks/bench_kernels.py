"""Benchmark: compiled reservoir kernel vs the pure-numpy fallback.

Runs the workloads that dominate benchmark time (windowed harvesting over
many short windows, one long continuous sequence) on both backends and
prints a timing table.

    python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from flowcast._kernels import _reservoir_py

try:
    from flowcast._kernels import _reservoir_cy
except ImportError:
    _reservoir_cy = None


def run_case(label, impl, w_res, w_in, inputs, alpha, repeats=5):
    impl.batch_leaky_run(w_res, w_in, inputs, alpha, 0)  # warm up
    best = min(
        _timed(impl, w_res, w_in, inputs, alpha) for _ in range(repeats))
    return best


def _timed(impl, w_res, w_in, inputs, alpha):
    t0 = time.perf_counter()
    impl.batch_leaky_run(w_res, w_in, inputs, alpha, 0)
    return time.perf_counter() - t0


def main():
    rng = np.random.default_rng(0)
    cases = []
    for label, m, t, n in [
        ("windowed  M=4000 W=6   N=100", 4000, 6, 100),
        ("windowed  M=30000 W=6  N=100", 30000, 6, 100),
        ("windowed  M=4000 W=6   N=300", 4000, 6, 300),
        ("continuous T=35040     N=100", 1, 35040, 100),
        ("continuous T=35040     N=300", 1, 35040, 300),
    ]:
        w_res = rng.uniform(-1, 1, (n, n)) * (0.9 / np.sqrt(n))
        w_in = rng.uniform(-1, 1, (n, 1))
        inputs = rng.standard_normal((m, t, 1))
        cases.append((label, w_res, w_in, inputs))

    print(f"{'case':<32} {'python':>10} {'cython':>10} {'speedup':>8}")
    for label, w_res, w_in, inputs in cases:
        py = run_case(label, _reservoir_py, w_res, w_in, inputs, 0.5)
        if _reservoir_cy is None:
            print(f"{label:<32} {py * 1e3:>8.1f}ms {'n/a':>10} {'':>8}")
            continue
        cy = run_case(label, _reservoir_cy, w_res, w_in, inputs, 0.5)
        print(f"{label:<32} {py * 1e3:>8.1f}ms {cy * 1e3:>8.1f}ms {py / cy:>7.2f}x")


if __name__ == "__main__":
    main()
