"""Timing harness for the two kernel backends.

Compares the Cython loops against the numpy (BLAS) implementations on
the shapes the trainer actually hits: dense layer products and the
normalized-adjacency sparse product.  Run from the repository root:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --repeats 9 --graph-k 30

The numpy sparse path densifies the adjacency before multiplying, so
the interesting comparison is sparse: the compiled loop scales with the
nonzero count while the densify-and-BLAS route scales with n^2.  On
dense products BLAS wins once the matrices stop being tiny; both
observations are printed so the default backend choice stays visible.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from gemi.graph import knn_graph_symmetric, normalize_adjacency
from gemi.kernels import (
    BACKEND,
    compiled_csr_matmul,
    compiled_matmul,
    numpy_csr_matmul,
    numpy_matmul,
)
from gemi.numerics import SeededRng


def median_time(fn, args, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def bench_dense(rng: SeededRng, repeats: int) -> None:
    print("dense matmul (n, d) x (d, h)")
    print(f"{'shape':>22} {'compiled':>12} {'numpy':>12} {'ratio c/n':>10} {'max|diff|':>10}")
    for n, d, h in [(150, 32, 128), (600, 64, 128), (1500, 128, 128), (3000, 256, 128)]:
        a = rng.normal(size=(n, d))
        b = rng.normal(size=(d, h))
        tc = median_time(compiled_matmul, (a, b), repeats)
        tn = median_time(numpy_matmul, (a, b), repeats)
        diff = float(np.abs(compiled_matmul(a, b) - numpy_matmul(a, b)).max())
        print(f"{f'{n}x{d} . {d}x{h}':>22} {tc * 1e3:>10.3f}ms {tn * 1e3:>10.3f}ms {tc / tn:>10.2f} {diff:>10.2e}")


def bench_sparse(rng: SeededRng, repeats: int, k: int) -> None:
    print(f"\nsparse csr_matmul, k={k} nearest-neighbor adjacency (normalized)")
    print(f"{'shape':>22} {'nnz':>9} {'compiled':>12} {'numpy':>12} {'ratio c/n':>10} {'max|diff|':>10}")
    for n, h in [(150, 128), (600, 128), (1500, 128), (3000, 128)]:
        X = rng.normal(size=(n, 32))
        adj = normalize_adjacency(knn_graph_symmetric(X, min(k, n - 1)))
        x = rng.normal(size=(n, h))
        args = (adj.indptr, adj.indices, adj.weights, x)
        tc = median_time(compiled_csr_matmul, args, repeats)
        tn = median_time(numpy_csr_matmul, args, repeats)
        diff = float(np.abs(compiled_csr_matmul(*args) - numpy_csr_matmul(*args)).max())
        print(f"{f'{n}x{n} . {n}x{h}':>22} {adj.indices.size:>9} {tc * 1e3:>10.3f}ms {tn * 1e3:>10.3f}ms {tc / tn:>10.2f} {diff:>10.2e}")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=7, help="timings per cell, median reported")
    parser.add_argument("--graph-k", type=int, default=30, help="neighbors per node for the sparse cases")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    try:
        compiled_matmul(np.eye(2), np.eye(2))
    except AttributeError:
        print("compiled extension not built; nothing to compare against")
        return 1

    print(f"selected backend at import: {BACKEND}\n")
    rng = SeededRng(args.seed)
    bench_dense(rng.substream("dense"), args.repeats)
    bench_sparse(rng.substream("sparse"), args.repeats, args.graph_k)
    print(
        "\nratio < 1 means the compiled loop is faster.  Expect BLAS to win"
        "\nthe larger dense products and the compiled loop to win sparse,"
        "\nwhere the numpy route pays for densifying the adjacency."
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
