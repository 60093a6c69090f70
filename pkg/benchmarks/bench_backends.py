#!/usr/bin/env python3
"""Times the compiled kernels against their pure-NumPy twins.

Usage:
    python benchmarks/bench_backends.py [--n 2000] [--repeat 5]

Prints one row per kernel with the median wall time of each backend and
the speedup. Sizes default to the scale of a mid-sized training run
(the self-correlation softmax is NxN, message passing is CSR x dense).
"""

import argparse
import time

import numpy as np

from dfcn import _kernels_py
from dfcn.graph import SparseAdjacency

try:
    from dfcn import _kernels as compiled
except ImportError:
    compiled = None


def median_time(fn, args, repeat):
    times = []
    for _ in range(repeat):
        tick = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - tick)
    return sorted(times)[len(times) // 2]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=2000, help="node count")
    parser.add_argument("--d", type=int, default=64, help="feature width")
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    if compiled is None:
        raise SystemExit(
            "compiled extension not built; run "
            "'pip install -e . --no-build-isolation' first"
        )

    rng = np.random.default_rng(0)
    n, d = args.n, args.d
    dense_adj = np.triu((rng.random((n, n)) < 20.0 / n).astype(float), k=1)
    adj = SparseAdjacency.from_dense(dense_adj + dense_adj.T)
    h = rng.normal(size=(n, d))
    z = rng.normal(size=(n, 16))
    centers = rng.normal(size=(10, 16))
    gram = rng.normal(size=(n, n))
    a = rng.normal(size=(n, d))
    b = rng.normal(size=(n, d))

    cases = [
        ("csr_matmat", (adj.indptr, adj.indices, adj.data, h)),
        ("pairwise_sqdist", (z, centers)),
        ("row_softmax", (gram,)),
        ("frobenius_sq_diff", (a, b)),
    ]

    print(f"n={n}, d={d}, nnz={adj.nnz}, repeat={args.repeat} (median wall time)")
    print(f"{'kernel':<20}{'pure':>12}{'compiled':>12}{'speedup':>10}")
    for name, call_args in cases:
        pure_fn = getattr(_kernels_py, name)
        fast_fn = getattr(compiled, name)
        t_pure = median_time(pure_fn, call_args, args.repeat)
        t_fast = median_time(fast_fn, call_args, args.repeat)
        print(
            f"{name:<20}{t_pure * 1e3:>10.2f}ms{t_fast * 1e3:>10.2f}ms"
            f"{t_pure / t_fast:>9.1f}x"
        )


if __name__ == "__main__":
    main()
