"""Throughput comparison of the compiled and pure-numpy kernel backends.

Usage: python benchmarks/bench_kernels.py [--sizes 1e4,1e5,1e6] [--repeats 30]

Prints a table of median wall time per call and the cython/numpy speedup
for each kernel. Falls back gracefully if the extension is not built.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from sentipre import kernels


def bench(fn, args, repeats: int) -> float:
    """Median seconds per call over `repeats` timed runs (after one warm-up)."""
    fn(*args)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def make_cases(n: int, rng: np.random.Generator):
    x = rng.normal(size=n).astype(np.float32)
    g = rng.normal(size=n).astype(np.float32)
    param = rng.normal(size=n).astype(np.float32)
    grad = rng.normal(size=n).astype(np.float32)
    m = np.zeros(n, dtype=np.float32)
    v = np.zeros(n, dtype=np.float32)
    return {
        "gelu_forward": (lambda mod: mod.gelu_forward, (x,)),
        "gelu_backward": (lambda mod: mod.gelu_backward, (g, x)),
        "adamw_update": (lambda mod: mod.adamw_update,
                         (param, grad, m, v, 3, 1e-3, 0.9, 0.999, 1e-8, 0.01)),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", default="10000,100000,1000000",
                    help="comma-separated array lengths")
    ap.add_argument("--repeats", type=int, default=30)
    opts = ap.parse_args()
    sizes = [int(float(s)) for s in opts.sizes.split(",")]

    backends = {}
    backends["numpy"] = kernels.use_backend("numpy")
    try:
        backends["cython"] = kernels.use_backend("cython")
    except (ImportError, ValueError):
        print("compiled extension unavailable; benchmarking numpy only")

    rng = np.random.default_rng(0)
    header = f"{'kernel':16s} {'n':>9s}" + "".join(
        f" {b + ' (us)':>14s}" for b in backends)
    if len(backends) == 2:
        header += f" {'speedup':>9s}"
    print(header)
    print("-" * len(header))

    for n in sizes:
        cases = make_cases(n, rng)
        for name, (getter, args) in cases.items():
            row = f"{name:16s} {n:>9d}"
            medians = {}
            for bname, mod in backends.items():
                medians[bname] = bench(getter(mod), args, opts.repeats)
                row += f" {medians[bname] * 1e6:>14.1f}"
            if len(medians) == 2:
                row += f" {medians['numpy'] / medians['cython']:>8.2f}x"
            print(row)

    # leave the module in its import-time state
    kernels.use_backend(kernels.BACKEND)


if __name__ == "__main__":
    main()
