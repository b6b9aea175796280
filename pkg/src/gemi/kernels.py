"""Kernel backend selection.

Two interchangeable backends provide the hot matrix products:

* ``compiled``: Cython loops from :mod:`gemi._core`.  Dense and sparse
  products share one accumulation order, so ``csr_matmul`` agrees
  bit-for-bit with ``matmul`` on the densified operand.
* ``numpy``: BLAS matmul; the sparse product densifies and calls the
  same matmul, which makes the agreement trivial.

The invariant is per-backend.  Results may differ between backends in
the last ulp (BLAS blocks its accumulations), which is why a process
never mixes them: the choice is made once at import.  Set GEMI_KERNELS
to ``compiled``, ``numpy``, or ``auto`` (default) to override.
"""

import os

import numpy as np

try:
    from . import _core
except ImportError:
    _core = None


def _as_dense(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def numpy_matmul(a, b):
    return np.matmul(_as_dense(a), _as_dense(b))


def numpy_csr_matmul(indptr, indices, weights, x):
    x = _as_dense(x)
    n = indptr.shape[0] - 1
    dense = np.zeros((n, x.shape[0]), dtype=np.float64)
    rows = np.repeat(np.arange(n), np.diff(indptr))
    dense[rows, indices] = weights
    return numpy_matmul(dense, x)


def compiled_matmul(a, b):
    return _core.matmul(_as_dense(a), _as_dense(b))


def compiled_csr_matmul(indptr, indices, weights, x):
    return _core.csr_matmul(
        np.ascontiguousarray(indptr, dtype=np.int64),
        np.ascontiguousarray(indices, dtype=np.int64),
        np.ascontiguousarray(weights, dtype=np.float64),
        _as_dense(x),
    )


def _select_backend():
    choice = os.environ.get("GEMI_KERNELS", "auto").lower()
    if choice not in ("auto", "compiled", "numpy"):
        raise ValueError(f"GEMI_KERNELS must be auto, compiled or numpy, got {choice!r}")
    if choice == "compiled" and _core is None:
        raise RuntimeError("GEMI_KERNELS=compiled but the gemi._core extension is not built")
    if choice == "numpy" or _core is None:
        return "numpy"
    return "compiled"


BACKEND = _select_backend()

if BACKEND == "compiled":
    matmul = compiled_matmul
    csr_matmul = compiled_csr_matmul
else:
    matmul = numpy_matmul
    csr_matmul = numpy_csr_matmul
