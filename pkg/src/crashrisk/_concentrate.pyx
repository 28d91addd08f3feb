# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled univariate concentration search.

Mirrors ``crashrisk._concentrate_py`` operation for operation; both must
produce identical windows for identical inputs.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline Py_ssize_t _nearest_window(const double[::1] xs, double c, Py_ssize_t h) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = xs.shape[0] - h, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if c - xs[mid] > xs[mid + h] - c:
            lo = mid + 1
        else:
            hi = mid
    return lo


def concentrate_1d(const double[::1] xs, const double[::1] centers, Py_ssize_t h, int max_steps):
    """Run C-steps from each start center over sorted data ``xs``.

    Returns (window_start, steps, converged) arrays, one entry per center.
    """
    cdef Py_ssize_t n = xs.shape[0], m = centers.shape[0], k, i, l, l2
    cdef int s
    cdef double inv_h = 1.0 / h, c
    starts_arr = np.empty(m, dtype=np.int64)
    steps_arr = np.zeros(m, dtype=np.int32)
    conv_arr = np.zeros(m, dtype=np.uint8)
    cdef cnp.int64_t[::1] starts = starts_arr
    cdef cnp.int32_t[::1] steps = steps_arr
    cdef cnp.uint8_t[::1] conv = conv_arr
    cs_arr = np.empty(n + 1, dtype=np.float64)
    cdef double[::1] cs = cs_arr
    with nogil:
        cs[0] = 0.0
        for i in range(n):
            cs[i + 1] = cs[i] + xs[i]
        for k in range(m):
            l = _nearest_window(xs, centers[k], h)
            s = 0
            while s < max_steps:
                c = (cs[l + h] - cs[l]) * inv_h
                l2 = _nearest_window(xs, c, h)
                s += 1
                if l2 == l:
                    conv[k] = 1
                    break
                l = l2
            starts[k] = l
            steps[k] = s
    return starts_arr, steps_arr, conv_arr
