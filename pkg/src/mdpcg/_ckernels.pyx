# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_kernels_py``."""
import numpy as np

from libc.math cimport fabs, INFINITY
from libc.stdint cimport int64_t
from scipy.linalg.cython_blas cimport dgemv


def relative_value_iteration(const double[::1] cost, const int64_t[::1] sa_ptr,
                             const int64_t[::1] sa_idx, const int64_t[::1] head_ptr,
                             const int64_t[::1] head_idx, const double[::1] head_prob,
                             double[::1] h, double tau, double tol, Py_ssize_t max_sweeps):
    cdef Py_ssize_t S = h.shape[0]
    cdef Py_ssize_t s, j, m, k, sweeps = 0
    cdef double q, best, lo = 0.0, hi = 0.0, d, ref
    cdef bint converged = False
    cdef double[::1] w = np.empty(S)
    cdef int64_t[::1] policy = np.empty(S, dtype=np.int64)

    with nogil:
        while sweeps < max_sweeps:
            sweeps += 1
            lo = INFINITY
            hi = -INFINITY
            for s in range(S):
                best = INFINITY
                for j in range(sa_ptr[s], sa_ptr[s + 1]):
                    k = sa_idx[j]
                    q = cost[k]
                    for m in range(head_ptr[k], head_ptr[k + 1]):
                        q += head_prob[m] * h[head_idx[m]]
                    if q < best:
                        best = q
                w[s] = (1.0 - tau) * h[s] + tau * best
                d = w[s] - h[s]
                if d < lo:
                    lo = d
                if d > hi:
                    hi = d
            ref = w[0]
            for s in range(S):
                h[s] = w[s] - ref
            if hi - lo < tol:
                converged = True
                break

        for s in range(S):
            best = INFINITY
            for j in range(sa_ptr[s], sa_ptr[s + 1]):
                k = sa_idx[j]
                q = cost[k]
                for m in range(head_ptr[k], head_ptr[k + 1]):
                    q += head_prob[m] * h[head_idx[m]]
                if q < best:
                    best = q
                    policy[s] = k

    return 0.5 * (lo + hi) / tau, np.asarray(policy), sweeps, converged


def stationary_power(const double[:, ::1] P, double[::1] x, double tol, Py_ssize_t max_iter):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i, j, it = 0
    cdef double res = INFINITY, total
    cdef double[::1] y = np.empty(n)

    cdef char trans = b'N'
    cdef int m = <int>n, inc = 1
    cdef double one = 1.0, zero = 0.0

    with nogil:
        while it < max_iter:
            # row-major P is column-major P^T, so this is y = P^T x
            dgemv(&trans, &m, &m, &one, <double*>&P[0, 0], &m, &x[0], &inc, &zero, &y[0], &inc)
            res = 0.0
            for j in range(n):
                res += fabs(y[j] - x[j])
            if res <= tol:
                break
            total = 0.0
            for j in range(n):
                x[j] = 0.5 * (x[j] + y[j])
                total += x[j]
            for j in range(n):
                x[j] /= total
            it += 1
    return it, res
