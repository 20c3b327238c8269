# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled element kernels for Whitney-form mass matrices.

Same contracts as :mod:`derham_shape._kernels.fallback`.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline double _pair(double vol, Py_ssize_t i, Py_ssize_t j) noexcept nogil:
    return vol * (2.0 if i == j else 1.0) / 20.0


def local_mass_0(const double[::1] vol, const double[::1] w):
    cdef Py_ssize_t nt = vol.shape[0], t, i, j
    out = np.empty((nt, 4, 4))
    cdef double[:, :, ::1] M = out
    with nogil:
        for t in range(nt):
            for i in range(4):
                for j in range(4):
                    M[t, i, j] = w[t] * _pair(vol[t], i, j)
    return out


def local_mass_1(const double[:, :, ::1] grads, const double[::1] vol,
                 const double[:, :, ::1] W, const cnp.int64_t[:, :, ::1] edge_local):
    cdef Py_ssize_t nt = vol.shape[0], t, e, f, i, j, k, l
    cdef Py_ssize_t a, b, c, d
    cdef double B[4][4]
    cdef double Wg[3]
    cdef double v
    out = np.empty((nt, 6, 6))
    cdef double[:, :, ::1] M = out
    with nogil:
        for t in range(nt):
            v = vol[t]
            for i in range(4):
                for k in range(3):
                    Wg[k] = 0.0
                    for l in range(3):
                        Wg[k] += W[t, k, l] * grads[t, i, l]
                for j in range(4):
                    B[j][i] = 0.0
                    for k in range(3):
                        B[j][i] += grads[t, j, k] * Wg[k]
            for e in range(6):
                a = edge_local[t, e, 0]
                b = edge_local[t, e, 1]
                for f in range(6):
                    c = edge_local[t, f, 0]
                    d = edge_local[t, f, 1]
                    M[t, e, f] = (_pair(v, a, c) * B[b][d] - _pair(v, a, d) * B[b][c]
                                  - _pair(v, b, c) * B[a][d] + _pair(v, b, d) * B[a][c])
    return out


cdef inline void _cross(double* x, double* y, double* out) noexcept nogil:
    out[0] = x[1] * y[2] - x[2] * y[1]
    out[1] = x[2] * y[0] - x[0] * y[2]
    out[2] = x[0] * y[1] - x[1] * y[0]


def local_mass_2(const double[:, :, ::1] grads, const double[::1] vol,
                 const double[:, :, ::1] W, const cnp.int64_t[:, :, ::1] face_local):
    cdef Py_ssize_t nt = vol.shape[0], t, f, g, i, j, k, l, m
    cdef double cv[4][3][3]
    cdef double ga[3]
    cdef double gb[3]
    cdef double gc[3]
    cdef double Wc[3]
    cdef double acc, q, v
    out = np.empty((nt, 4, 4))
    cdef double[:, :, ::1] M = out
    with nogil:
        for t in range(nt):
            v = vol[t]
            for f in range(4):
                for k in range(3):
                    ga[k] = grads[t, face_local[t, f, 0], k]
                    gb[k] = grads[t, face_local[t, f, 1], k]
                    gc[k] = grads[t, face_local[t, f, 2], k]
                _cross(gb, gc, cv[f][0])
                _cross(gc, ga, cv[f][1])
                _cross(ga, gb, cv[f][2])
            for f in range(4):
                for g in range(4):
                    acc = 0.0
                    for j in range(3):
                        for k in range(3):
                            Wc[k] = 0.0
                            for l in range(3):
                                Wc[k] += W[t, k, l] * cv[g][j][l]
                        for i in range(3):
                            q = 0.0
                            for m in range(3):
                                q += cv[f][i][m] * Wc[m]
                            acc += _pair(v, face_local[t, f, i], face_local[t, g, j]) * q
                    M[t, f, g] = 4.0 * acc
    return out


def local_mass_3(const double[::1] vol, const double[::1] w):
    cdef Py_ssize_t nt = vol.shape[0], t
    out = np.empty((nt, 1, 1))
    cdef double[:, :, ::1] M = out
    with nogil:
        for t in range(nt):
            M[t, 0, 0] = w[t] / vol[t]
    return out
