# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot loops in ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()

BACKEND = "cython"


cdef inline Py_ssize_t _span(const double[::1] U, int p, int n, double x) noexcept nogil:
    # largest i in [p, n-1] with U[i] <= x
    cdef Py_ssize_t lo = p, hi = n, mid
    if x >= U[n]:
        return n - 1
    if x < U[p]:
        return p
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if U[mid] <= x:
            lo = mid
        else:
            hi = mid
    return lo


def find_spans(knots, int degree, x):
    cdef const double[::1] U = np.ascontiguousarray(knots, dtype=np.float64)
    cdef const double[::1] xs = np.ascontiguousarray(np.atleast_1d(x), dtype=np.float64)
    cdef int n = U.shape[0] - degree - 1
    out = np.empty(xs.shape[0], dtype=np.int64)
    cdef cnp.int64_t[::1] o = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(xs.shape[0]):
            o[i] = _span(U, degree, n, xs[i])
    return out


def basis_ders(knots, int degree, x, int nders):
    cdef const double[::1] U = np.ascontiguousarray(knots, dtype=np.float64)
    cdef const double[::1] xs = np.ascontiguousarray(np.atleast_1d(x), dtype=np.float64)
    cdef int p = degree
    cdef int n = U.shape[0] - p - 1
    cdef Py_ssize_t npt = xs.shape[0]
    first = np.empty(npt, dtype=np.int64)
    out = np.zeros((npt, nders + 1, p + 1), dtype=np.float64)
    cdef cnp.int64_t[::1] fo = first
    cdef double[:, :, ::1] o = out
    cdef int top = nders if nders < p else p
    cdef double* ndu = <double*> malloc((p + 1) * (p + 1) * sizeof(double))
    cdef double* a = <double*> malloc(2 * (p + 1) * sizeof(double))
    cdef double* left = <double*> malloc((p + 1) * sizeof(double))
    cdef double* right = <double*> malloc((p + 1) * sizeof(double))
    cdef Py_ssize_t i, span
    cdef int j, r, k, s1, s2, rk, pk, j1, j2, q
    cdef double u, saved, temp, d, fac
    cdef int W = p + 1
    try:
        with nogil:
            for i in range(npt):
                u = xs[i]
                span = _span(U, p, n, u)
                fo[i] = span - p
                ndu[0] = 1.0
                for j in range(1, p + 1):
                    left[j] = u - U[span + 1 - j]
                    right[j] = U[span + j] - u
                    saved = 0.0
                    for r in range(j):
                        ndu[j * W + r] = right[r + 1] + left[j - r]
                        temp = ndu[r * W + j - 1] / ndu[j * W + r]
                        ndu[r * W + j] = saved + right[r + 1] * temp
                        saved = left[j - r] * temp
                    ndu[j * W + j] = saved
                for j in range(p + 1):
                    o[i, 0, j] = ndu[j * W + p]
                for r in range(p + 1):
                    s1 = 0
                    s2 = 1
                    a[0] = 1.0
                    for k in range(1, top + 1):
                        d = 0.0
                        rk = r - k
                        pk = p - k
                        if r >= k:
                            a[s2 * W] = a[s1 * W] / ndu[(pk + 1) * W + rk]
                            d = a[s2 * W] * ndu[rk * W + pk]
                        j1 = 1 if rk >= -1 else -rk
                        j2 = k - 1 if r - 1 <= pk else p - r
                        for q in range(j1, j2 + 1):
                            a[s2 * W + q] = (a[s1 * W + q] - a[s1 * W + q - 1]) / ndu[(pk + 1) * W + rk + q]
                            d += a[s2 * W + q] * ndu[(rk + q) * W + pk]
                        if r <= pk:
                            a[s2 * W + k] = -a[s1 * W + k - 1] / ndu[(pk + 1) * W + r]
                            d += a[s2 * W + k] * ndu[r * W + pk]
                        o[i, k, r] = d
                        s1, s2 = s2, s1
                fac = p
                for k in range(1, top + 1):
                    for j in range(p + 1):
                        o[i, k, j] *= fac
                    fac *= p - k
    finally:
        free(ndu)
        free(a)
        free(left)
        free(right)
    return first, out


def accumulate(const double[:, :, :, ::1] A, const double[:, :, :, ::1] B,
               const double[:, ::1] w, const cnp.int64_t[:, ::1] rows,
               const cnp.int64_t[:, ::1] cols, const cnp.int64_t[::1] indptr,
               const cnp.int64_t[::1] indices, keys, ncols, double[::1] data):
    cdef Py_ssize_t E = A.shape[0], Q = A.shape[1], NA = A.shape[2], F = A.shape[3]
    cdef Py_ssize_t NB = B.shape[2]
    cdef Py_ssize_t e, q, c, dd, f, lo, hi, mid, col, r
    cdef double s, t
    with nogil:
        for e in range(E):
            for c in range(NA):
                r = rows[e, c]
                for dd in range(NB):
                    s = 0.0
                    for q in range(Q):
                        t = 0.0
                        for f in range(F):
                            t = t + A[e, q, c, f] * B[e, q, dd, f]
                        s = s + w[e, q] * t
                    col = cols[e, dd]
                    lo = indptr[r]
                    hi = indptr[r + 1]
                    while lo < hi:
                        mid = (lo + hi) // 2
                        if indices[mid] < col:
                            lo = mid + 1
                        else:
                            hi = mid
                    data[lo] += s
