# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of ``mspf._pykernels``.

Keep the arithmetic in the selectors exactly as in the numpy versions (same
operations, same order, no fused multiply-add) so that both backends select
identical particles.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef Py_ssize_t _first_reaching(const double[::1] weights, double total) noexcept nogil:
    # first index whose running sum reaches the total: the last index any
    # position can select, and one that always carries positive weight
    cdef Py_ssize_t k, n = weights.shape[0]
    cdef double c = 0.0
    for k in range(n):
        c = c + weights[k]
        if c >= total:
            return k
    return n - 1


def systematic_select(const double[::1] weights, Py_ssize_t m, double u0):
    cdef Py_ssize_t n = weights.shape[0]
    cdef Py_ssize_t j = 0, k, last
    cdef double total = 0.0, c, pos
    cdef cnp.ndarray[cnp.intp_t, ndim=1] out = np.empty(m, dtype=np.intp)
    cdef cnp.intp_t[::1] idx = out
    for k in range(n):
        total = total + weights[k]
    last = _first_reaching(weights, total)
    c = weights[0]
    for k in range(m):
        pos = (<double>k + u0) / <double>m * total
        while c <= pos and j < last:
            j += 1
            c = c + weights[j]
        idx[k] = j
    return out


cdef inline Py_ssize_t _upper_bound(const double[::1] cum, double pos, Py_ssize_t last) noexcept nogil:
    # first index with cum[i] > pos, clipped to ``last``
    cdef Py_ssize_t lo = 0, hi = cum.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if cum[mid] <= pos:
            lo = mid + 1
        else:
            hi = mid
    if lo > last:
        lo = last
    return lo


def multinomial_select(const double[::1] weights, const double[::1] uniforms):
    cdef Py_ssize_t n = weights.shape[0], m = uniforms.shape[0], k, last
    cdef double[::1] cum = np.empty(n)
    cdef double c = 0.0, total
    cdef cnp.ndarray[cnp.intp_t, ndim=1] out = np.empty(m, dtype=np.intp)
    cdef cnp.intp_t[::1] idx = out
    for k in range(n):
        c = c + weights[k]
        cum[k] = c
    total = cum[n - 1]
    last = _first_reaching(weights, total)
    with nogil:
        for k in range(m):
            idx[k] = _upper_bound(cum, uniforms[k] * total, last)
    return out


def shift_gather(const double[:, ::1] hist, const cnp.intp_t[::1] parent,
                 const double[::1] front, double[:, ::1] out):
    cdef Py_ssize_t depth = hist.shape[0], m = hist.shape[1], a, j
    with nogil:
        for j in range(m):
            out[0, j] = front[j]
        for a in range(1, depth):
            for j in range(m):
                out[a, j] = hist[a - 1, parent[j]]


cdef double _ecdf_sq(const double[::1] xs, const double[::1] truth,
                     const double[::1] points, double dx) noexcept nogil:
    cdef Py_ssize_t m = xs.shape[0], g = points.shape[0], i, c = 0
    cdef double acc = 0.0, d
    for i in range(g):
        while c < m and xs[c] <= points[i]:
            c += 1
        d = truth[i] - <double>c / <double>m
        acc += d * d
    return acc * dx


def ecdf_sq_distance(const double[::1] sorted_x, const double[::1] truth,
                     const double[::1] points, double dx):
    return _ecdf_sq(sorted_x, truth, points, dx)


def ecdf_sq_distance_rows(const double[:, ::1] sorted_rows, const double[:, ::1] truth,
                          const cnp.intp_t[::1] row_times, const double[::1] points, double dx):
    cdef Py_ssize_t r, nrows = sorted_rows.shape[0]
    cdef cnp.ndarray[double, ndim=1] out = np.zeros(nrows)
    cdef double[::1] res = out
    with nogil:
        for r in range(nrows):
            if row_times[r] >= 0:
                res[r] = _ecdf_sq(sorted_rows[r], truth[row_times[r]], points, dx)
    return out
