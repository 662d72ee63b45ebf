"""Benchmark the jit-compiled kernels against their pure-numpy fallbacks.

Run: python benchmarks/bench_kernels.py [--n 2000 --bins 10 --repeats 5]

Times the two hot loops (concordance pair statistics, batched hazard-loss
terms) on both paths and prints the speedup. The numpy path is the one
selected by SURVFORMER_DISABLE_NUMBA=1 at import time; here both variants
are called directly so a single process can compare them.
"""

import argparse
import time

import numpy as np

from survformer import kernels


def time_fn(fn, args, repeats, warmup=2):
    for _ in range(warmup):
        fn(*args)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return np.mean(times), np.std(times)


def bench_ctd(n, repeats):
    rng = np.random.default_rng(0)
    times = rng.uniform(0.5, 10.0, size=n)
    eligible = rng.uniform(size=n) > 0.5
    scores = rng.uniform(size=n)
    weights = rng.uniform(0.5, 4.0, size=n)
    args = (times, eligible, scores, weights)
    check_np = kernels.ctd_pair_stats_numpy(*args)
    check_nb = kernels._ctd_pair_stats_nb(*args)
    assert np.isclose(check_np[0], check_nb[0]) and check_np[2] == check_nb[2]
    return (
        time_fn(kernels.ctd_pair_stats_numpy, args, repeats),
        time_fn(kernels._ctd_pair_stats_nb, args, repeats),
    )


def bench_pch(n, bins, repeats):
    rng = np.random.default_rng(1)
    hazards = rng.uniform(0.05, 3.0, size=(n, bins))
    kappa0 = rng.integers(0, bins, size=n)
    rho = rng.uniform(size=n)
    events = rng.integers(0, 2, size=n).astype(float)
    args = (hazards, kappa0, rho, events)
    np.testing.assert_allclose(
        kernels.pch_terms_numpy(*args), kernels._pch_terms_nb(*args), rtol=1e-12
    )
    return (
        time_fn(kernels.pch_terms_numpy, args, repeats),
        time_fn(kernels._pch_terms_nb, args, repeats),
    )


def show(label, numpy_stats, numba_stats):
    (np_mean, np_std), (nb_mean, nb_std) = numpy_stats, numba_stats
    speedup = np_mean / nb_mean if nb_mean > 0 else float("inf")
    print(f"{label}:")
    print(f"  numpy  {np_mean * 1e3:9.3f} +- {np_std * 1e3:.3f} ms")
    print(f"  numba  {nb_mean * 1e3:9.3f} +- {nb_std * 1e3:.3f} ms")
    print(f"  speedup {speedup:.1f}x")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=2000, help="records")
    parser.add_argument("--bins", type=int, default=10, help="time bins")
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if not kernels.HAS_NUMBA:
        print("numba is not installed; nothing to compare")
        return

    print(f"n={args.n}, bins={args.bins}, repeats={args.repeats}")
    np_stats, nb_stats = bench_ctd(args.n, args.repeats)
    show(f"concordance pair statistics ({args.n}^2 pairs)", np_stats, nb_stats)
    big = args.n * 50  # loss terms are cheap per row; use a bigger batch
    np_stats, nb_stats = bench_pch(big, args.bins, args.repeats)
    show(f"hazard loss terms ({big} x {args.bins})", np_stats, nb_stats)


if __name__ == "__main__":
    main()
