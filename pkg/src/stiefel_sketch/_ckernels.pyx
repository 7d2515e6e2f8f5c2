# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled CountSketch kernel."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def countsketch_apply(const double[:, ::1] Z, const cnp.int64_t[::1] h,
                      const double[::1] g, Py_ssize_t s):
    """Accumulate ``g[j] * Z[j, :]`` into row ``h[j]`` of an ``s x d`` output.

    Rows are visited in increasing ``j``, so each output entry is summed in
    a fixed order.
    """
    cdef Py_ssize_t n = Z.shape[0]
    cdef Py_ssize_t d = Z.shape[1]
    cdef Py_ssize_t j, k, r
    cdef double sign
    if h.shape[0] != n or g.shape[0] != n:
        raise ValueError("hash/sign length does not match the row count")
    out = np.zeros((s, d), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for j in range(n):
            r = h[j]
            sign = g[j]
            for k in range(d):
                o[r, k] += sign * Z[j, k]
    return out
