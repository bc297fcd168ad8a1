# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled stencil hot kernels.

Per-point arithmetic mirrors numpy_backend.py exactly (same operation
order) so the two backends agree bit for bit.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def lap1(double[::1] u, double[::1] cface, double[::1] inv_w, double inv_h2, double jump=0.0):
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t i, ip, im
    cdef double up, um
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    for i in range(n):
        ip = i + 1
        im = i - 1
        up = u[ip] if ip < n else u[0] + jump
        um = u[im] if im >= 0 else u[n - 1] - jump
        out[i] = inv_w[i] * ((cface[i] * (up - u[i]) - cface[im if im >= 0 else n - 1] * (u[i] - um)) * inv_h2)
    return out_arr


def lap2(double[:, ::1] u, double[:, ::1] cf1, double[:, ::1] cf2, double[:, ::1] c12,
         double[:, ::1] inv_w, double inv_h1sq, double inv_h2sq, double inv_2h1, double inv_2h2,
         double jump1=0.0, double jump2=0.0):
    cdef Py_ssize_t n1 = u.shape[0]
    cdef Py_ssize_t n2 = u.shape[1]
    cdef Py_ssize_t i, j, ip, im, jp, jm
    cdef double u1p, u1m, u2p, u2m, flux1, flux2, mixed
    out_arr = np.empty((n1, n2), dtype=np.float64)
    w12_arr = np.empty((n1, n2), dtype=np.float64)
    w21_arr = np.empty((n1, n2), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[:, ::1] w12 = w12_arr
    cdef double[:, ::1] w21 = w21_arr
    for i in range(n1):
        ip = i + 1 if i + 1 < n1 else 0
        im = i - 1 if i > 0 else n1 - 1
        for j in range(n2):
            jp = j + 1 if j + 1 < n2 else 0
            jm = j - 1 if j > 0 else n2 - 1
            u1p = u[ip, j] + (jump1 if i + 1 == n1 else 0.0)
            u1m = u[im, j] - (jump1 if i == 0 else 0.0)
            u2p = u[i, jp] + (jump2 if j + 1 == n2 else 0.0)
            u2m = u[i, jm] - (jump2 if j == 0 else 0.0)
            w12[i, j] = c12[i, j] * ((u2p - u2m) * inv_2h2)
            w21[i, j] = c12[i, j] * ((u1p - u1m) * inv_2h1)
    for i in range(n1):
        ip = i + 1 if i + 1 < n1 else 0
        im = i - 1 if i > 0 else n1 - 1
        for j in range(n2):
            jp = j + 1 if j + 1 < n2 else 0
            jm = j - 1 if j > 0 else n2 - 1
            u1p = u[ip, j] + (jump1 if i + 1 == n1 else 0.0)
            u1m = u[im, j] - (jump1 if i == 0 else 0.0)
            u2p = u[i, jp] + (jump2 if j + 1 == n2 else 0.0)
            u2m = u[i, jm] - (jump2 if j == 0 else 0.0)
            flux1 = (cf1[i, j] * (u1p - u[i, j]) - cf1[im, j] * (u[i, j] - u1m)) * inv_h1sq
            flux2 = (cf2[i, j] * (u2p - u[i, j]) - cf2[i, jm] * (u[i, j] - u2m)) * inv_h2sq
            mixed = (w12[ip, j] - w12[im, j]) * inv_2h1 + (w21[i, jp] - w21[i, jm]) * inv_2h2
            out[i, j] = inv_w[i, j] * ((flux1 + flux2) + mixed)
    return out_arr
