# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled stratum kernels: one pass per stratum, no temporaries."""

import numpy as np

from libc.math cimport exp, log1p


def stratum_nll(const double[::1] eta, const long long[::1] offsets):
    cdef Py_ssize_t n = offsets.shape[0] - 1
    cdef Py_ssize_t s, i, a, b, top
    cdef double total = 0.0, mx, rest
    with nogil:
        for s in range(n):
            a = offsets[s]
            b = offsets[s + 1]
            top = a
            mx = eta[a]
            for i in range(a + 1, b):
                if eta[i] > mx:
                    mx = eta[i]
                    top = i
            rest = 0.0
            for i in range(a, b):
                if i != top:
                    rest += exp(eta[i] - mx)
            total += (mx - eta[a]) + log1p(rest)
    return total


def stratum_nll_weights(const double[::1] eta, const long long[::1] offsets):
    cdef Py_ssize_t n = offsets.shape[0] - 1
    cdef Py_ssize_t s, i, a, b, top
    cdef double total = 0.0, mx, rest, norm
    w_arr = np.empty(eta.shape[0], dtype=np.float64)
    cdef double[::1] w = w_arr
    with nogil:
        for s in range(n):
            a = offsets[s]
            b = offsets[s + 1]
            top = a
            mx = eta[a]
            for i in range(a + 1, b):
                if eta[i] > mx:
                    mx = eta[i]
                    top = i
            rest = 0.0
            for i in range(a, b):
                if i != top:
                    w[i] = exp(eta[i] - mx)
                    rest += w[i]
                else:
                    w[i] = 1.0
            total += (mx - eta[a]) + log1p(rest)
            norm = 1.0 / (1.0 + rest)
            for i in range(a, b):
                w[i] *= norm
            w[a] -= 1.0
    return total, w_arr
