# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled corner-scan kernels.

Each kernel evaluates, for every corner r_k, either the dominance indicator
1{x_i <= r_k coordinate-wise} or the Gaussian-smoothed indicator
prod_j Phi((r_k[j] - x_i[j]) / eps) against every sample point x_i.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport erfc
from libc.stdint cimport int64_t

cnp.import_array()

cdef double INV_SQRT2 = 0.7071067811865475244


cdef inline double _ncdf(double x) noexcept nogil:
    # Phi rounds to exactly 1.0 above 8.3 and underflows to 0 below -38.5
    if x > 8.3:
        return 1.0
    if x < -38.5:
        return 0.0
    return 0.5 * erfc(-x * INV_SQRT2)


def indicator_sums(const double[:, ::1] points, const double[::1] weights,
                   const double[:, ::1] corners):
    cdef Py_ssize_t n = points.shape[0], p = points.shape[1]
    cdef Py_ssize_t k = corners.shape[0]
    cdef Py_ssize_t a, i, j
    cdef double acc
    cdef bint inside
    if p == 1:
        return _indicator_sums_1d(points, weights, corners)
    out = np.zeros(k, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for a in range(k):
            acc = 0.0
            for i in range(n):
                inside = True
                for j in range(p):
                    if points[i, j] > corners[a, j]:
                        inside = False
                        break
                if inside:
                    acc = acc + weights[i]
            o[a] = acc
    return out


def _indicator_sums_1d(const double[:, ::1] points, const double[::1] weights,
                       const double[:, ::1] corners):
    # sort once, prefix-sum the weights, binary-search each corner
    order = np.argsort(np.asarray(points[:, 0]), kind="stable")
    cdef double[::1] xs = np.ascontiguousarray(np.asarray(points[:, 0])[order])
    cdef double[::1] cw = np.concatenate([[0.0], np.cumsum(np.asarray(weights)[order])])
    cdef Py_ssize_t n = xs.shape[0], k = corners.shape[0]
    cdef Py_ssize_t a, lo, hi, mid
    cdef double c
    out = np.zeros(k, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for a in range(k):
            c = corners[a, 0]
            lo = 0
            hi = n
            while lo < hi:
                mid = (lo + hi) >> 1
                if xs[mid] <= c:
                    lo = mid + 1
                else:
                    hi = mid
            o[a] = cw[lo]
    return out


def indicator_matrix(const double[:, ::1] points, const double[:, ::1] corners):
    cdef Py_ssize_t n = points.shape[0], p = points.shape[1]
    cdef Py_ssize_t k = corners.shape[0]
    cdef Py_ssize_t a, i, j
    cdef bint inside
    out = np.zeros((k, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for a in range(k):
            for i in range(n):
                inside = True
                for j in range(p):
                    if points[i, j] > corners[a, j]:
                        inside = False
                        break
                if inside:
                    o[a, i] = 1.0
    return out


def phi_sums(const double[:, ::1] points, const double[::1] weights,
             const double[:, ::1] corners, double eps):
    cdef Py_ssize_t n = points.shape[0], p = points.shape[1]
    cdef Py_ssize_t k = corners.shape[0]
    cdef Py_ssize_t a, i, j
    cdef double acc, prod, inv = 1.0 / eps
    out = np.zeros(k, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for a in range(k):
            acc = 0.0
            for i in range(n):
                prod = 1.0
                for j in range(p):
                    prod = prod * _ncdf((corners[a, j] - points[i, j]) * inv)
                    if prod == 0.0:
                        break
                acc = acc + weights[i] * prod
            o[a] = acc
    return out


def phi_matrix(const double[:, ::1] points, const double[:, ::1] corners, double eps):
    cdef Py_ssize_t n = points.shape[0], p = points.shape[1]
    cdef Py_ssize_t k = corners.shape[0]
    cdef Py_ssize_t a, i, j
    cdef double prod, inv = 1.0 / eps
    out = np.empty((k, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for a in range(k):
            for i in range(n):
                prod = 1.0
                for j in range(p):
                    prod = prod * _ncdf((corners[a, j] - points[i, j]) * inv)
                    if prod == 0.0:
                        break
                o[a, i] = prod
    return out


def phi_table_sums(const double[:, ::1] points, const double[::1] weights,
                   const double[::1] values, const int64_t[::1] axis,
                   const int64_t[:, ::1] index, double eps, Py_ssize_t block):
    # Phi is tabulated once per (distinct corner value, point); corners then
    # only multiply table entries
    cdef Py_ssize_t n = points.shape[0], p = points.shape[1]
    cdef Py_ssize_t k = index.shape[0], u = values.shape[0]
    cdef Py_ssize_t a, i, j, b, lo, hi
    cdef double acc, prod, inv = 1.0 / eps
    table = np.empty((u, block), dtype=np.float64)
    cdef double[:, ::1] t = table
    out = np.zeros(k, dtype=np.float64)
    cdef double[::1] o = out
    lo = 0
    with nogil:
        while lo < n:
            hi = min(lo + block, n)
            for b in range(u):
                for i in range(lo, hi):
                    t[b, i - lo] = _ncdf((values[b] - points[i, axis[b]]) * inv)
            for a in range(k):
                acc = 0.0
                for i in range(lo, hi):
                    prod = 1.0
                    for j in range(p):
                        prod = prod * t[index[a, j], i - lo]
                        if prod == 0.0:
                            break
                    acc = acc + weights[i] * prod
                o[a] = o[a] + acc
            lo = hi
    return out


def phi_table_matrix(const double[:, ::1] points, const double[::1] values,
                     const int64_t[::1] axis, const int64_t[:, ::1] index, double eps):
    cdef Py_ssize_t n = points.shape[0], p = points.shape[1]
    cdef Py_ssize_t k = index.shape[0], u = values.shape[0]
    cdef Py_ssize_t a, i, j, b
    cdef double prod, inv = 1.0 / eps
    table = np.empty((u, n), dtype=np.float64)
    cdef double[:, ::1] t = table
    out = np.empty((k, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for b in range(u):
            for i in range(n):
                t[b, i] = _ncdf((values[b] - points[i, axis[b]]) * inv)
        for a in range(k):
            for i in range(n):
                prod = 1.0
                for j in range(p):
                    prod = prod * t[index[a, j], i]
                    if prod == 0.0:
                        break
                o[a, i] = prod
    return out
