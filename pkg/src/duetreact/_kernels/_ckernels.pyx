# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled brute-force scans. Semantics mirror ``_fallback`` exactly."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def nearest_codes(const double[:, ::1] z, const double[:, ::1] codebook):
    """Index of the nearest codebook row for each row of ``z``; ties -> lowest index."""
    cdef Py_ssize_t n = z.shape[0], k = codebook.shape[0], c = z.shape[1]
    cdef Py_ssize_t i, j, d
    cdef double best, dist, diff
    cdef Py_ssize_t arg
    out = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] res = out
    with nogil:
        for i in range(n):
            best = 1.0e308
            arg = 0
            for j in range(k):
                dist = 0.0
                for d in range(c):
                    diff = z[i, d] - codebook[j, d]
                    dist = dist + diff * diff
                if dist < best:
                    best = dist
                    arg = j
            res[i] = arg
    return out


def contact_mask(const double[:, :, ::1] follower, const double[:, :, ::1] leader, double delta):
    """(T, Jf, Jl) uint8 mask: 1 where |follower[t,i] - leader[t,j]| <= delta."""
    cdef Py_ssize_t T = follower.shape[0], jf = follower.shape[1], jl = leader.shape[1]
    cdef Py_ssize_t t, i, j
    cdef double dx, dy, dz
    out = np.zeros((T, jf, jl), dtype=np.uint8)
    cdef cnp.uint8_t[:, :, ::1] res = out
    with nogil:
        for t in range(T):
            for i in range(jf):
                for j in range(jl):
                    dx = follower[t, i, 0] - leader[t, j, 0]
                    dy = follower[t, i, 1] - leader[t, j, 1]
                    dz = follower[t, i, 2] - leader[t, j, 2]
                    if sqrt(dx * dx + dy * dy + dz * dz) <= delta:
                        res[t, i, j] = 1
    return out


def mean_pairwise_distance(const double[:, ::1] x):
    """Mean Euclidean distance over all unordered row pairs."""
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double total = 0.0, acc, diff
    if n < 2:
        raise ValueError("need at least two vectors")
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                acc = 0.0
                for k in range(d):
                    diff = x[i, k] - x[j, k]
                    acc = acc + diff * diff
                total = total + sqrt(acc)
    return total / (n * (n - 1) / 2.0)
