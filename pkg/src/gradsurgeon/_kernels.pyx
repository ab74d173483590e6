# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled reduction kernels with a fixed left-to-right accumulation order.

These mirror ``_kernels_py`` operation for operation: same operand order,
double precision throughout, no FMA contraction (enforced via compiler flags
in setup.py), so the two backends produce bit-identical results and differ
only in speed.  Shape checking happens in the callers; inputs here are
trusted C-contiguous float64 buffers.
"""

from libc.math cimport sqrt

import numpy as np


def dot(double[::1] a, double[::1] b):
    cdef Py_ssize_t i, n = a.shape[0]
    cdef double acc = 0.0
    for i in range(n):
        acc = acc + a[i] * b[i]
    return acc


def vsum(double[::1] a):
    cdef Py_ssize_t i, n = a.shape[0]
    cdef double acc = 0.0
    for i in range(n):
        acc = acc + a[i]
    return acc


def l2_norm(double[::1] a):
    cdef Py_ssize_t i, n = a.shape[0]
    cdef double acc = 0.0
    for i in range(n):
        acc = acc + a[i] * a[i]
    return sqrt(acc)


def matvec(double[:, ::1] m, double[::1] x):
    """Row-major matrix times vector; each row reduced left to right."""
    cdef Py_ssize_t i, j, rows = m.shape[0], cols = m.shape[1]
    out_arr = np.empty(rows, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double acc
    for i in range(rows):
        acc = 0.0
        for j in range(cols):
            acc = acc + m[i, j] * x[j]
        out[i] = acc
    return out_arr


def matvec_t(double[:, ::1] m, double[::1] x):
    """Transposed product m.T @ x; column j reduced over rows 0..rows-1."""
    cdef Py_ssize_t i, j, rows = m.shape[0], cols = m.shape[1]
    out_arr = np.zeros(cols, dtype=np.float64)
    cdef double[::1] out = out_arr
    for i in range(rows):
        for j in range(cols):
            out[j] = out[j] + m[i, j] * x[i]
    return out_arr
