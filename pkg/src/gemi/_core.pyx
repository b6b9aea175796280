# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled matrix kernels.

Both kernels accumulate each output row as an ordered sequence of
axpy updates (ascending contributing index, multiply then add, no FMA:
see -ffp-contract=off in setup.py).  matmul skips zero coefficients, so
for an adjacency matrix and its CSR form the two kernels execute the
exact same float operations in the exact same order.  That makes
spmm(adj, x) == matmul(dense(adj), x) hold bit-for-bit, which the
deterministic-training guarantees rely on.
"""

import numpy as np


def matmul(const double[:, ::1] a, const double[:, ::1] b):
    """Dense product a @ b with sequential per-row accumulation."""
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t k = a.shape[1]
    cdef Py_ssize_t m = b.shape[1]
    if b.shape[0] != k:
        raise ValueError("matmul: inner dimensions disagree")
    out_arr = np.zeros((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, p, j
    cdef double w
    for i in range(n):
        for p in range(k):
            w = a[i, p]
            if w != 0.0:
                for j in range(m):
                    out[i, j] += w * b[p, j]
    return out_arr


def csr_matmul(
    const long long[::1] indptr,
    const long long[::1] indices,
    const double[::1] weights,
    const double[:, ::1] x,
):
    """Sparse-dense product for a CSR matrix with indptr of length n+1."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t m = x.shape[1]
    out_arr = np.zeros((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, e, j, col
    cdef double w
    for i in range(n):
        for e in range(indptr[i], indptr[i + 1]):
            col = indices[e]
            w = weights[e]
            for j in range(m):
                out[i, j] += w * x[col, j]
    return out_arr
