"""Compare the numpy and numba backends of the hot kernels.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each kernel runs on the same inputs under both backends; the script checks
that outputs agree and prints the best wall time of each.
"""

import argparse
import time

import numpy as np

from mtplab import _kernels
from mtplab import space as sp
from mtplab.balancing import distance_ranks, pair_order
from mtplab.walks import _cumulative, kernel_from_transport


def walk_inputs(rng):
    s = sp.torus_grid(8, 8)
    cum = _cumulative(kernel_from_transport(s))
    return (cum, 0, rng.random(200_000))


def greedy_inputs(rng):
    s = sp.torus_grid(8, 8)
    a = rng.uniform(0, 1, s.n)
    b = rng.uniform(0, 1, s.n)
    b *= a.sum() / b.sum()
    xs = np.repeat(np.arange(s.n), s.n)
    ys = np.tile(np.arange(s.n), s.n)
    order = pair_order(s, xs, ys, rng.permutation(s.n).astype(float))
    return (xs[order].astype(np.int64), ys[order].astype(np.int64), a, b)


def extra_head_inputs(rng):
    s = sp.torus_grid(4, 4)
    size = 2000
    occ = np.zeros((size, s.n), dtype=bool)
    for row in occ:
        row[rng.choice(s.n, 8, replace=False)] = True
    return (distance_ranks(s.dist), occ, rng.random((size, s.n)),
            rng.integers(0, s.n, size).astype(np.int64), rng.random(size), 0.5)


INPUTS = {"walk_path": walk_inputs, "greedy_allocate": greedy_inputs, "extra_head_batch": extra_head_inputs}


def best_time(fn, args, repeat):
    out = fn(*args)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"active backend: {_kernels.BACKEND}")
    print(f"{'kernel':<18}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}  agree")
    for name, impls in _kernels.IMPLEMENTATIONS.items():
        inputs = INPUTS[name](np.random.default_rng(0))
        t_np, out_np = best_time(impls["numpy"], inputs, args.repeat)
        if impls["numba"] is None:
            print(f"{name:<18}{t_np:>12.4f}{'n/a':>12}{'':>10}  -")
            continue
        t_nb, out_nb = best_time(impls["numba"], inputs, args.repeat)
        agree = np.allclose(out_np, out_nb, atol=1e-12)
        print(f"{name:<18}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>9.1f}x  {agree}")


if __name__ == "__main__":
    main()
