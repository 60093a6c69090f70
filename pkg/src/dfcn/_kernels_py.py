"""Pure-NumPy twins of the compiled kernels.

Every function here must accept the same arguments and return the same
shapes/dtypes as its counterpart in the Cython extension ``dfcn._kernels``.
The test suite cross-checks both backends to tight tolerances; keep any
change mirrored.
"""

import numpy as np


def csr_matmat(indptr, indices, data, dense):
    """Sparse (CSR) times dense: one BLAS dot per nonempty row."""
    n = indptr.shape[0] - 1
    out = np.zeros((n, dense.shape[1]), dtype=np.float64)
    for i in range(n):
        lo, hi = indptr[i], indptr[i + 1]
        if lo != hi:
            out[i] = data[lo:hi] @ dense[indices[lo:hi]]
    return out


def pairwise_sqdist(a, b):
    """All squared Euclidean distances between rows of a and rows of b.

    Uses the |x|^2 + |y|^2 - 2<x,y> expansion; clamped at zero because
    cancellation can leave tiny negative values.
    """
    aa = np.einsum("ij,ij->i", a, a)
    bb = np.einsum("ij,ij->i", b, b)
    d = aa[:, None] + bb[None, :] - 2.0 * (a @ b.T)
    return np.maximum(d, 0.0, out=d)


def row_softmax(m):
    """Row-wise softmax with per-row max subtraction for overflow safety."""
    out = m - m.max(axis=1, keepdims=True)
    np.exp(out, out=out)
    out /= out.sum(axis=1, keepdims=True)
    return out


def frobenius_sq_diff(a, b):
    """sum((a - b)**2) as a Python float."""
    d = a - b
    return float(np.einsum("ij,ij->", d, d))
