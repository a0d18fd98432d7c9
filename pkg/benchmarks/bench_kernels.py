#!/usr/bin/env python3
"""Benchmark the Matern covariance kernel: compiled backend vs pure-Python
fallback, with the vectorized exponential family as context.

The Matern entrywise evaluation (modified Bessel K per entry) is the hot
kernel the compiled extension exists for; the exponential-family fills are
plain numpy SIMD loops in both backends and are shown for scale.

Run:  python3 benchmarks/bench_kernels.py [--sizes 200 1000 2000] [--repeats 3]
"""

import argparse
import time

import numpy as np

from geomc import kernels
from geomc.covariance import CovFamily, ProcessParams, cov_from_dist


def time_call(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", type=int, nargs="+",
                        default=[200, 500, 1000, 2000])
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--nu", type=float, default=1.5)
    args = parser.parse_args()

    if kernels.native is None:
        print("compiled backend unavailable; comparing fallback against itself")
    print(f"active backend: {kernels.BACKEND}")
    print(f"{'n':>6} {'entries':>10} {'matern native':>14} "
          f"{'matern fallback':>16} {'speedup':>8} {'exp (numpy)':>12}")

    rng = np.random.default_rng(0)
    for n in args.sizes:
        pts = rng.random((n, 2))
        from geomc.covariance import pairwise_distances

        dist = pairwise_distances(pts, pts)
        flat = np.ascontiguousarray(dist).reshape(-1)
        out = np.empty_like(flat)

        t_native = None
        if kernels.native is not None:
            t_native = time_call(
                lambda: kernels.native.matern_fill(flat, out, 6.0, args.nu, 2.0),
                args.repeats,
            )
        t_fallback = time_call(
            lambda: kernels.fallback.matern_fill(flat, out, 6.0, args.nu, 2.0),
            args.repeats,
        )
        params = ProcessParams(sigma_sq=2.0, phi=6.0, tau_sq=1.0)
        buf = np.empty_like(dist)
        t_exp = time_call(
            lambda: cov_from_dist(dist, CovFamily("exponential"), params,
                                  out=buf),
            args.repeats,
        )
        native_str = f"{t_native * 1e3:10.1f} ms" if t_native else "       n/a"
        speedup = f"{t_fallback / t_native:7.1f}x" if t_native else "     n/a"
        print(f"{n:>6} {n * n:>10} {native_str:>14} "
              f"{t_fallback * 1e3:13.1f} ms {speedup:>8} "
              f"{t_exp * 1e3:9.1f} ms")


if __name__ == "__main__":
    main()
