# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel core; same contracts as ``lsrk._kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()


cdef inline double _value(double d2, const double[::1] coefs) noexcept nogil:
    cdef Py_ssize_t k
    cdef double out = exp(-d2 * coefs[0])
    for k in range(1, coefs.shape[0]):
        out *= exp(-d2 * coefs[k])
    return out


def gram(points, coefs):
    cdef const double[::1] p = np.ascontiguousarray(points, dtype=np.float64)
    cdef const double[::1] c = np.ascontiguousarray(coefs, dtype=np.float64)
    cdef Py_ssize_t n = p.shape[0], i, j
    cdef double d, v
    out = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(n):
            o[i, i] = _value(0.0, c)
            for j in range(i + 1, n):
                d = p[i] - p[j]
                v = _value(d * d, c)
                o[i, j] = v
                o[j, i] = v
    return out


def cross_gram(s, t, coefs):
    cdef const double[::1] a = np.ascontiguousarray(s, dtype=np.float64)
    cdef const double[::1] b = np.ascontiguousarray(t, dtype=np.float64)
    cdef const double[::1] c = np.ascontiguousarray(coefs, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0], i, j
    cdef double d
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(n):
            for j in range(m):
                d = a[i] - b[j]
                o[i, j] = _value(d * d, c)
    return out


def expansion(s, knots, coefs, weights):
    w = np.asarray(weights, dtype=np.float64)
    squeeze = w.ndim == 1
    cdef const double[:, ::1] wv = np.ascontiguousarray(w.reshape(w.shape[0], -1))
    cdef const double[::1] a = np.ascontiguousarray(s, dtype=np.float64)
    cdef const double[::1] b = np.ascontiguousarray(knots, dtype=np.float64)
    cdef const double[::1] c = np.ascontiguousarray(coefs, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0], r = wv.shape[1], i, j, k
    cdef double d, v
    out = np.zeros((n, r), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(n):
            for j in range(m):
                d = a[i] - b[j]
                v = _value(d * d, c)
                for k in range(r):
                    o[i, k] += v * wv[j, k]
    return out[:, 0] if squeeze else out
