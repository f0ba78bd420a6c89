# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; see ``_kernels_py.py`` for the reference semantics."""

import numpy as np

from libc.math cimport exp


def dominance_counts(const double[:, ::1] cal, const double[:, ::1] query):
    cdef Py_ssize_t m = cal.shape[0], d = cal.shape[1], n = query.shape[0]
    cdef Py_ssize_t i, j, c
    cdef long long count
    cdef bint dominated
    out = np.empty(n, dtype=np.int64)
    cdef long long[::1] o = out
    with nogil:
        for i in range(n):
            count = 0
            for j in range(m):
                dominated = True
                for c in range(d):
                    if cal[j, c] > query[i, c]:
                        dominated = False
                        break
                if dominated:
                    count += 1
            o[i] = count
    return out


def knn_mean(const double[:, ::1] ref, const double[::1] values,
             const double[:, ::1] query, Py_ssize_t k):
    cdef Py_ssize_t m = ref.shape[0], d = ref.shape[1], n = query.shape[0]
    cdef Py_ssize_t i, j, c, filled, pos
    cdef double dist, diff, acc
    best_d_arr = np.empty(k, dtype=np.float64)
    best_i_arr = np.empty(k, dtype=np.intp)
    cdef double[::1] best_d = best_d_arr
    cdef Py_ssize_t[::1] best_i = best_i_arr
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            filled = 0
            for j in range(m):
                dist = 0.0
                for c in range(d):
                    diff = query[i, c] - ref[j, c]
                    dist = dist + diff * diff
                if filled == k and not (dist < best_d[k - 1]):
                    continue
                # insertion keeps earlier indices ahead of equal distances
                pos = filled if filled < k else k - 1
                while pos > 0 and best_d[pos - 1] > dist:
                    best_d[pos] = best_d[pos - 1]
                    best_i[pos] = best_i[pos - 1]
                    pos -= 1
                best_d[pos] = dist
                best_i[pos] = j
                if filled < k:
                    filled += 1
            # sum in index order so equal neighbour sets give equal means
            for c in range(1, k):
                j = best_i[c]
                pos = c
                while pos > 0 and best_i[pos - 1] > j:
                    best_i[pos] = best_i[pos - 1]
                    pos -= 1
                best_i[pos] = j
            acc = 0.0
            for c in range(k):
                acc = acc + values[best_i[c]]
            o[i] = acc / k
    return out


def gibbs_kernel(const double[:, ::1] cost, const double[::1] alpha,
                 const double[::1] beta, double eps, double[:, ::1] out):
    cdef Py_ssize_t n = cost.shape[0], m = cost.shape[1], i, j
    cdef double a
    with nogil:
        for i in range(n):
            a = alpha[i]
            for j in range(m):
                out[i, j] = exp((a + beta[j] - cost[i, j]) / eps)
    return np.asarray(out)


def concordance(const double[::1] x, const double[::1] y):
    cdef Py_ssize_t n = x.shape[0], i, j
    cdef long long total = 0
    cdef double dx, dy
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                dx = x[i] - x[j]
                dy = y[i] - y[j]
                if (dx > 0 and dy > 0) or (dx < 0 and dy < 0):
                    total += 1
                elif (dx > 0 and dy < 0) or (dx < 0 and dy > 0):
                    total -= 1
    return total
