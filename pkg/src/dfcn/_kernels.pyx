# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: CSR matmul, pairwise squared distances,
row softmax and Frobenius reductions.

Semantics mirror dfcn._kernels_py; the pure module is the fallback when
this extension is not built.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, INFINITY

cnp.import_array()


def csr_matmat(cnp.int64_t[::1] indptr,
               cnp.int64_t[::1] indices,
               double[::1] data,
               cnp.ndarray[double, ndim=2] dense):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t c = dense.shape[1]
    cdef cnp.ndarray[double, ndim=2] out = np.zeros((n, c), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef double[:, :] dv = dense
    cdef Py_ssize_t i, j, k
    cdef cnp.int64_t lo, hi, col
    cdef double w
    for i in range(n):
        lo = indptr[i]
        hi = indptr[i + 1]
        for j in range(lo, hi):
            col = indices[j]
            w = data[j]
            for k in range(c):
                ov[i, k] += w * dv[col, k]
    return out


def pairwise_sqdist(cnp.ndarray[double, ndim=2] a,
                    cnp.ndarray[double, ndim=2] b):
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0], d = a.shape[1]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef double[:, :] av = a, bv = b
    cdef Py_ssize_t i, j, k
    cdef double acc, diff
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for k in range(d):
                diff = av[i, k] - bv[j, k]
                acc += diff * diff
            ov[i, j] = acc
    return out


def row_softmax(cnp.ndarray[double, ndim=2] m):
    cdef Py_ssize_t n = m.shape[0], c = m.shape[1]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((n, c), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef double[:, :] mv = m
    cdef Py_ssize_t i, j
    cdef double hi, total
    for i in range(n):
        hi = -INFINITY
        for j in range(c):
            if mv[i, j] > hi:
                hi = mv[i, j]
        total = 0.0
        for j in range(c):
            ov[i, j] = exp(mv[i, j] - hi)
            total += ov[i, j]
        for j in range(c):
            ov[i, j] /= total
    return out


def frobenius_sq_diff(cnp.ndarray[double, ndim=2] a,
                      cnp.ndarray[double, ndim=2] b):
    cdef Py_ssize_t n = a.shape[0], c = a.shape[1]
    cdef double[:, :] av = a, bv = b
    cdef Py_ssize_t i, j
    cdef double acc = 0.0, diff
    for i in range(n):
        for j in range(c):
            diff = av[i, j] - bv[i, j]
            acc += diff * diff
    return acc
