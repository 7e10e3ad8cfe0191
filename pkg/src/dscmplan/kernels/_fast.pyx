# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_reference``; same signatures."""

import numpy as np
cimport numpy as cnp
from libc.math cimport erfc, exp, fabs, pow

cnp.import_array()

cdef double _INV_SQRT2 = 0.7071067811865475
cdef double _FAR = 37.0


cdef inline double _q(double x) nogil:
    return 0.5 * erfc(x * _INV_SQRT2)


def piecewise_pdf(y, params):
    cdef double[::1] yy = np.ascontiguousarray(np.atleast_1d(y), dtype=np.float64)
    cdef double[::1] p = np.ascontiguousarray(params, dtype=np.float64)
    cdef Py_ssize_t n = yy.shape[0], j
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double a1 = p[0], m1 = p[1], b1 = p[2], s1 = 2.0 * p[3]
    cdef double a2 = p[4], m2 = p[5], b2 = p[6], s2 = 2.0 * p[7], d = p[8]
    with nogil:
        for j in range(n):
            if yy[j] <= d:
                o[j] = a1 * exp(-pow(fabs(yy[j] - m1), b1) / s1)
            else:
                o[j] = a2 * exp(-pow(fabs(yy[j] - m2), b2) / s2)
    if np.ndim(y) == 0:
        return float(out[0])
    return out


def interval_masses(y, weights, lo, hi, double sigma):
    cdef double[::1] yy = np.ascontiguousarray(y, dtype=np.float64)
    cdef double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef double[::1] l = np.ascontiguousarray(np.atleast_1d(lo), dtype=np.float64)
    cdef double[::1] h = np.ascontiguousarray(np.atleast_1d(hi), dtype=np.float64)
    cdef Py_ssize_t n = yy.shape[0], m = l.shape[0], i, j
    out = np.zeros(m, dtype=np.float64)
    cdef double[::1] o = out
    cdef double inv = 1.0 / sigma, u, v, acc, pj
    with nogil:
        for i in range(m):
            acc = 0.0
            for j in range(n):
                u = (l[i] - yy[j]) * inv
                v = (h[i] - yy[j]) * inv
                if u >= _FAR or v <= -_FAR:
                    continue
                if u <= -_FAR and v >= _FAR:
                    acc += w[j]
                    continue
                if u > -v:
                    pj = _q(u) - _q(v)
                else:
                    pj = _q(-v) - _q(-u)
                acc += w[j] * pj
            o[i] = acc
    return out
