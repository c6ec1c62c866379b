"""Compiled vs NumPy kernel timings.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--scale 1.0]

Each kernel is warmed up once (so JIT compilation is excluded) and the best of
``--repeat`` runs is reported. Both implementations are imported directly, so
the ``RECTFLOW_DISABLE_JIT`` flag does not matter here.
"""

import argparse
import time

import numpy as np

from rectflow.kernels import _numba as NB
from rectflow.kernels import _numpy as NP


def best_of(fn, args, repeat):
    fn(*args)
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - start)
    return min(times)


def cases(scale, rng):
    n = max(int(1000 * scale), 10)
    k, d = 6, 2
    z = rng.standard_normal((n, d))
    mix = (z, rng.standard_normal((k, d)), rng.uniform(0.5, 2, (k, d)), rng.standard_normal((k, d)),
           rng.standard_normal((k, d)), rng.standard_normal(k))
    xt, vals = rng.standard_normal((n, d)), rng.standard_normal((n, d))
    cost = rng.random((n // 2, n // 2))
    seq = rng.standard_normal(4 * n)
    return [
        ("mixture_velocity", f"{n} points x {k} modes", mix),
        ("knn_average", f"{n} queries, {n} pairs, m=100", (z, xt, vals, 100, 0.5)),
        ("pairwise_distances", f"{n} x {n}", (z, xt)),
        ("linear_assignment", f"{n // 2} x {n // 2}", (cost,)),
        ("count_inversions", f"{4 * n} values", (seq,)),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--scale", type=float, default=1.0, help="multiplies the problem sizes")
    args = parser.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':<20} {'size':<32} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8}")
    for name, size, inputs in cases(args.scale, rng):
        t_nb = best_of(getattr(NB, name), inputs, args.repeat)
        t_np = best_of(getattr(NP, name), inputs, args.repeat)
        print(f"{name:<20} {size:<32} {t_nb * 1e3:>10.2f} {t_np * 1e3:>10.2f} {t_np / t_nb:>7.1f}x")


if __name__ == "__main__":
    main()
