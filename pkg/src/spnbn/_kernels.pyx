# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled batch evaluator for flattened circuits."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def eval_batch(
    const signed char[::1] kind,
    const long long[::1] ptr,
    const long long[::1] child,
    const double[::1] weight,
    const long long[::1] slot,
    const long long[::1] dptr,
    const double[::1] dprob,
    const double[:, ::1] lam,
):
    cdef Py_ssize_t m = kind.shape[0]
    cdef Py_ssize_t rows = lam.shape[0]
    cdef double[::1] out = np.empty(rows, dtype=np.float64)
    cdef double[::1] val = np.empty(m, dtype=np.float64)
    cdef Py_ssize_t b, i, k
    cdef double acc
    with nogil:
        for b in range(rows):
            for i in range(m):
                if kind[i] == 0:
                    val[i] = lam[b, slot[i]]
                elif kind[i] == 1:
                    acc = 0.0
                    for k in range(dptr[i], dptr[i + 1]):
                        acc = acc + dprob[k] * lam[b, slot[i] + k - dptr[i]]
                    val[i] = acc
                elif kind[i] == 2:
                    acc = 0.0
                    for k in range(ptr[i], ptr[i + 1]):
                        acc = acc + weight[k] * val[child[k]]
                    val[i] = acc
                else:
                    acc = 1.0
                    for k in range(ptr[i], ptr[i + 1]):
                        acc = acc * val[child[k]]
                    val[i] = acc
            out[b] = val[m - 1]
    return np.asarray(out)
