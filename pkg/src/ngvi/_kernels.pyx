# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled likelihood kernels; same contracts as ``_kernels_py``.

The per-datum weights are accumulated in a single pass over the
``n x M`` grid without materialising it, then contracted with the
covariates once.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log1p, fabs

cnp.import_array()


cdef inline double _dot(const double[:, ::1] x, Py_ssize_t i,
                        const double[:, ::1] z, Py_ssize_t m, Py_ssize_t d) nogil:
    cdef double acc = 0.0
    cdef Py_ssize_t k
    for k in range(d):
        acc += x[i, k] * z[m, k]
    return acc


cdef void _contract(const double[:, ::1] z, const double[::1] coef, const double[::1] w,
                    double[::1] grad, double[:, ::1] hess) nogil:
    cdef Py_ssize_t m, a, b
    cdef Py_ssize_t big_m = z.shape[0], d = z.shape[1]
    cdef double zw
    for m in range(big_m):
        for a in range(d):
            grad[a] += coef[m] * z[m, a]
            zw = w[m] * z[m, a]
            for b in range(a, d):
                hess[a, b] -= zw * z[m, b]
    for a in range(d):
        for b in range(a):
            hess[a, b] = hess[b, a]


def logistic_loglik(x, z, y):
    cdef const double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:, ::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], big_m = zv.shape[0], d = zv.shape[1], i, m
    out = np.zeros(n)
    cdef double[::1] ov = out
    cdef double a, acc
    with nogil:
        for i in range(n):
            acc = 0.0
            for m in range(big_m):
                a = _dot(xv, i, zv, m, d)
                if a > 0:
                    acc += yv[m] * a - a - log1p(exp(-a))
                else:
                    acc += yv[m] * a - log1p(exp(a))
            ov[i] = acc
    return out


def logistic_grad_hess_sum(x, z, y):
    cdef const double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:, ::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], big_m = zv.shape[0], d = zv.shape[1], i, m
    coef = np.zeros(big_m)
    w = np.zeros(big_m)
    grad = np.zeros(d)
    hess = np.zeros((d, d))
    cdef double[::1] cv = coef, wv = w, gv = grad
    cdef double[:, ::1] hv = hess
    cdef double a, s, e
    with nogil:
        for i in range(n):
            for m in range(big_m):
                a = _dot(xv, i, zv, m, d)
                if a >= 0:
                    s = 1.0 / (1.0 + exp(-a))
                else:
                    e = exp(a)
                    s = e / (1.0 + e)
                cv[m] += yv[m] - s
                wv[m] += s * (1.0 - s)
        _contract(zv, cv, wv, gv, hv)
    return grad, hess


def student_loglik(x, z, y, double dof, double scale2):
    cdef const double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:, ::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], big_m = zv.shape[0], d = zv.shape[1], i, m
    out = np.zeros(n)
    cdef double[::1] ov = out
    cdef double r, acc, c = dof * scale2, half = 0.5 * (dof + 1.0)
    with nogil:
        for i in range(n):
            acc = 0.0
            for m in range(big_m):
                r = yv[m] - _dot(xv, i, zv, m, d)
                acc -= half * log1p(r * r / c)
            ov[i] = acc
    return out


def student_grad_hess_sum(x, z, y, double dof, double scale2):
    cdef const double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:, ::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], big_m = zv.shape[0], d = zv.shape[1], i, m
    coef = np.zeros(big_m)
    w = np.zeros(big_m)
    grad = np.zeros(d)
    hess = np.zeros((d, d))
    cdef double[::1] cv = coef, wv = w, gv = grad
    cdef double[:, ::1] hv = hess
    cdef double r, r2, denom, c = dof * scale2, k = dof + 1.0
    with nogil:
        for i in range(n):
            for m in range(big_m):
                r = yv[m] - _dot(xv, i, zv, m, d)
                r2 = r * r
                denom = c + r2
                cv[m] += k * r / denom
                wv[m] += k * (c - r2) / (denom * denom)
        _contract(zv, cv, wv, gv, hv)
    return grad, hess
