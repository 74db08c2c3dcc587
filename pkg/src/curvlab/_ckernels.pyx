# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_pykernels``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def cumquad4(f, double h):
    cdef const double[::1] fv = np.ascontiguousarray(f, dtype=np.float64)
    cdef Py_ssize_t n = fv.shape[0]
    out = np.zeros(n)
    cdef double[::1] o = out
    cdef Py_ssize_t i
    cdef double acc = 0.0
    cdef double c = h / 24.0
    if n < 2:
        return out
    if n == 2:
        o[1] = 0.5 * h * (fv[0] + fv[1])
        return out
    if n == 3:
        o[1] = h / 12.0 * (5 * fv[0] + 8 * fv[1] - fv[2])
        o[2] = o[1] + h / 12.0 * (-fv[0] + 8 * fv[1] + 5 * fv[2])
        return out
    acc = c * (9 * fv[0] + 19 * fv[1] - 5 * fv[2] + fv[3])
    o[1] = acc
    for i in range(1, n - 2):
        acc += c * (-fv[i - 1] + 13 * fv[i] + 13 * fv[i + 1] - fv[i + 2])
        o[i + 1] = acc
    acc += c * (fv[n - 4] - 5 * fv[n - 3] + 19 * fv[n - 2] + 9 * fv[n - 1])
    o[n - 1] = acc
    return out


cdef void _jacobi(const double[:, :, :, ::1] t4, const double[:, :, ::1] q, Py_ssize_t r,
                  Py_ssize_t b, double[:, ::1] m) nogil:
    cdef Py_ssize_t n = t4.shape[0]
    cdef Py_ssize_t i, j, k, l
    cdef double acc, qj
    for i in range(n):
        for k in range(n):
            acc = 0.0
            for j in range(n):
                qj = q[r, j, b]
                if qj == 0.0:
                    continue
                for l in range(n):
                    acc += t4[i, j, k, l] * qj * q[r, l, b]
            m[i, k] = acc


def frame_values_grad(t4, q):
    cdef const double[:, :, :, ::1] tv = np.ascontiguousarray(t4, dtype=np.float64)
    cdef const double[:, :, ::1] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef Py_ssize_t nb = qv.shape[0]
    cdef Py_ssize_t n = qv.shape[1]
    cdef Py_ssize_t k = qv.shape[2]
    vals = np.zeros(nb)
    grad = np.zeros((nb, n, k))
    cdef double[::1] vv = vals
    cdef double[:, :, ::1] gv = grad
    cdef double[:, ::1] m = np.zeros((n, n))
    cdef Py_ssize_t r, a, b, i, kk
    cdef double acc
    with nogil:
        for r in range(nb):
            for b in range(k):
                _jacobi(tv, qv, r, b, m)
                for a in range(k):
                    for i in range(n):
                        acc = 0.0
                        for kk in range(n):
                            acc += m[i, kk] * qv[r, kk, a]
                        gv[r, i, a] += acc
            for a in range(k):
                for i in range(n):
                    vv[r] += qv[r, i, a] * gv[r, i, a]
                    gv[r, i, a] *= 4.0
    return vals, grad


def frame_values(t4, q):
    return frame_values_grad(t4, q)[0]
