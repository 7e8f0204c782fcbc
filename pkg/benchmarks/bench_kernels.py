"""Compare the compiled kernels against the pure-Python reference.

Usage::

    python3 benchmarks/bench_kernels.py [--n 1000] [--intervals 2000] [--repeat 3]

Prints one row per kernel with the best-of-``repeat`` time of each backend,
the speedup and whether the outputs agree bit for bit.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from aopc._backend import available_backends
from aopc.bounding import build_grid
from aopc.model import generate_one, normalize


def _cases(n, m):
    inst = normalize(generate_one(n, 0.75, 1.0, 1))
    r, v, c = (np.ascontiguousarray(a) for a in (inst.r, inst.v, inst.c))
    g = build_grid(inst, 1e-5)
    # a block of adjacent intervals near the middle of the window
    k0 = g.K // 2
    pts = g.point(np.arange(k0, k0 + m + 1))
    p_hi, p_lo = np.ascontiguousarray(pts[:-1]), np.ascontiguousarray(pts[1:])
    cap = 1.0 / p_lo[0] - 1.0
    coef = p_hi[0] * r * v - c
    kappa = n // 2
    # a tight limit makes the single-interval scan move the multiplier
    tight = max(1, n // 50)
    status = np.zeros(n, dtype=np.int8)
    take = np.zeros(n, dtype=np.int8)

    def order():
        return np.arange(n, dtype=np.int64)

    return {
        "interval_bounds": lambda k: k.interval_bounds(r, v, c, p_lo, p_hi, order()),
        "interval_bounds_card": lambda k: k.interval_bounds_card(
            r, v, c, p_lo, p_hi, order(), order(), kappa, 0.0, 1e-5, 10**6),
        "lagrangian_scan": lambda k: k.lagrangian_scan(
            coef, v, cap, tight, 0.0, 1e-5, 10**6, order()),
        "node_lp": lambda k: k.node_lp(r, v, c, status, p_hi[0], cap, order(), take),
        "node_lp_card": lambda k: k.node_lp_card(
            r, v, c, status, p_hi[0], cap, tight, 0.0, 1e-5, 10**6, order()),
    }


def _equal(a, b):
    if isinstance(a, tuple):
        return all(_equal(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b), equal_nan=True)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--intervals", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    kernels = available_backends()
    if "cython" not in kernels:
        raise SystemExit("compiled extension not built; run pip install -e .")
    py, cy = kernels["python"], kernels["cython"]
    print(f"n = {args.n}, intervals = {args.intervals}, best of {args.repeat}")
    print(f"{'kernel':<22}{'python s':>12}{'cython s':>12}{'speedup':>10}  equal")
    for name, fn in _cases(args.n, args.intervals).items():
        tp = min(timeit.repeat(lambda: fn(py), number=1, repeat=args.repeat))
        tc = min(timeit.repeat(lambda: fn(cy), number=1, repeat=args.repeat))
        eq = _equal(fn(py), fn(cy))
        print(f"{name:<22}{tp:>12.4f}{tc:>12.5f}{tp / tc:>10.1f}  {eq}")


if __name__ == "__main__":
    main()
