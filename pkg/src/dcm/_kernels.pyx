# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled training kernels; API mirrors dcm._kernels_py."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, tanh

cnp.import_array()

BACKEND_NAME = "compiled"

LOG_CLAMP = 1e-12

ACT_RELU = 0
ACT_TANH = 1

cdef double _LOG_CLAMP = 1e-12


def affine_forward(double[:, ::1] x, double[:, ::1] w, double[::1] b):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], m = w.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double acc
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for i in range(n):
        for j in range(m):
            acc = b[j]
            for k in range(d):
                acc += x[i, k] * w[j, k]
            out[i, j] = acc
    return out_arr


def act_forward(double[:, ::1] z, int act):
    cdef Py_ssize_t n = z.shape[0], m = z.shape[1]
    cdef Py_ssize_t i, j
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    if act == 0:
        for i in range(n):
            for j in range(m):
                out[i, j] = z[i, j] if z[i, j] > 0.0 else 0.0
    else:
        for i in range(n):
            for j in range(m):
                out[i, j] = tanh(z[i, j])
    return out_arr


def act_backward(double[:, ::1] dz, double[:, ::1] a, int act):
    cdef Py_ssize_t n = dz.shape[0], m = dz.shape[1]
    cdef Py_ssize_t i, j
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    if act == 0:
        for i in range(n):
            for j in range(m):
                out[i, j] = dz[i, j] if a[i, j] > 0.0 else 0.0
    else:
        for i in range(n):
            for j in range(m):
                out[i, j] = dz[i, j] * (1.0 - a[i, j] * a[i, j])
    return out_arr


def affine_backward(double[:, ::1] dz, double[:, ::1] x, double[:, ::1] w):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], m = w.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double g
    dw_arr = np.zeros((m, d), dtype=np.float64)
    db_arr = np.zeros(m, dtype=np.float64)
    dx_arr = np.zeros((n, d), dtype=np.float64)
    cdef double[:, ::1] dw = dw_arr
    cdef double[::1] db = db_arr
    cdef double[:, ::1] dx = dx_arr
    for i in range(n):
        for j in range(m):
            g = dz[i, j]
            db[j] += g
            for k in range(d):
                dw[j, k] += g * x[i, k]
                dx[i, k] += g * w[j, k]
    return dw_arr, db_arr, dx_arr


def softmax(double[:, ::1] z):
    cdef Py_ssize_t n = z.shape[0], c = z.shape[1]
    cdef Py_ssize_t i, j
    cdef double m, tot
    out_arr = np.empty((n, c), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for i in range(n):
        m = z[i, 0]
        for j in range(1, c):
            if z[i, j] > m:
                m = z[i, j]
        tot = 0.0
        for j in range(c):
            out[i, j] = exp(z[i, j] - m)
            tot += out[i, j]
        for j in range(c):
            out[i, j] /= tot
    return out_arr


def softmax_xent(double[:, ::1] z, double[:, ::1] targets):
    cdef Py_ssize_t n = z.shape[0], c = z.shape[1]
    cdef Py_ssize_t i, j
    cdef double m, tot, loss = 0.0, p, inv_n = 1.0 / n
    s_arr = np.empty((n, c), dtype=np.float64)
    cdef double[:, ::1] s = s_arr
    dl_arr = np.empty((n, c), dtype=np.float64)
    cdef double[:, ::1] dl = dl_arr
    for i in range(n):
        m = z[i, 0]
        for j in range(1, c):
            if z[i, j] > m:
                m = z[i, j]
        tot = 0.0
        for j in range(c):
            s[i, j] = exp(z[i, j] - m)
            tot += s[i, j]
        for j in range(c):
            s[i, j] /= tot
            p = s[i, j] if s[i, j] > _LOG_CLAMP else _LOG_CLAMP
            loss -= targets[i, j] * log(p)
            dl[i, j] = (s[i, j] - targets[i, j]) * inv_n
    return loss * inv_n, dl_arr
