"""Timing comparison of the pure-numpy and numba kernel implementations.

Run with the numba backend active (default when numba is installed):

    python3 benchmarks/bench_kernels.py [--sizes 200,500,1000] [--repeats 5]

Reports per-kernel best-of-N wall times and the speedup ratio.  The numba
variants are warmed up first so JIT compilation is excluded.
"""

import argparse
import time

import numpy as np

from imbvar import kernels


def best_of(fn, args, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_size(n, dim, repeats):
    rng = np.random.default_rng(0)
    x = np.ascontiguousarray(rng.standard_normal((n, dim)))
    d2 = kernels.pairwise_sq_dists_np(x)
    p = kernels.cond_affinities_np(d2, min(30.0, (n - 1) / 3.0))
    p_sym = np.ascontiguousarray((p + p.T) / (2.0 * n))
    y = np.ascontiguousarray(rng.standard_normal((n, 2)))

    cases = [
        ("pairwise_sq_dists", kernels.pairwise_sq_dists_np,
         kernels.pairwise_sq_dists_nb, (x,)),
        ("cond_affinities", kernels.cond_affinities_np,
         kernels.cond_affinities_nb, (d2, min(30.0, (n - 1) / 3.0))),
        ("tsne_forces", kernels.tsne_forces_np,
         kernels.tsne_forces_nb, (y, p_sym)),
    ]
    print(f"\nn = {n}, dim = {dim}")
    print(f"  {'kernel':<20} {'numpy':>10} {'numba':>10} {'speedup':>8}")
    for name, fn_np, fn_nb, args in cases:
        t_np = best_of(fn_np, args, repeats)
        if fn_nb is None:
            print(f"  {name:<20} {t_np * 1e3:>8.2f}ms {'n/a':>10} {'n/a':>8}")
            continue
        fn_nb(*args)  # warm-up: exclude JIT compile time
        t_nb = best_of(fn_nb, args, repeats)
        print(f"  {name:<20} {t_np * 1e3:>8.2f}ms {t_nb * 1e3:>8.2f}ms "
              f"{t_np / t_nb:>7.1f}x")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="200,500,1000",
                        help="comma-separated point counts")
    parser.add_argument("--dim", type=int, default=16)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    print(f"active backend: {kernels.BACKEND}")
    if kernels.pairwise_sq_dists_nb is None:
        print("numba backend unavailable; showing numpy timings only")
    for size in (int(s) for s in args.sizes.split(",")):
        bench_size(size, args.dim, args.repeats)


if __name__ == "__main__":
    main()
