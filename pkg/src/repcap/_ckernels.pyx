# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels. Contracts mirror ``repcap._pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()


def count_kmers(codes, int k, int g, long long base):
    cdef cnp.int64_t[::1] c = np.ascontiguousarray(codes, dtype=np.int64)
    cdef Py_ssize_t n = c.shape[0]
    cdef Py_ssize_t n_windows = n - g + 1
    cdef long long size = base ** k
    out = np.zeros(size, dtype=np.int64)
    cdef cnp.int64_t[::1] counts = out
    cdef Py_ssize_t i, t
    cdef long long idx
    if n_windows <= 0:
        return out
    if g == k:
        # rolling base-|alphabet| index over contiguous windows
        idx = 0
        for t in range(k):
            idx = idx * base + c[t]
        counts[idx] += 1
        for i in range(1, n_windows):
            idx = (idx * base + c[i + k - 1]) % size
            counts[idx] += 1
        return out
    for i in range(n_windows):
        idx = 0
        for t in range(k):
            idx = idx * base + c[i + t]
        counts[idx] += 1
    return out


def pairwise_sq_distances(X):
    cdef double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    out = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] D = out
    cdef Py_ssize_t i, j, t
    cdef double s, diff
    cdef const double* xi
    cdef const double* xj
    for i in range(n):
        xi = &x[i, 0] if d else NULL
        for j in range(i + 1, n):
            xj = &x[j, 0] if d else NULL
            s = 0.0
            for t in range(d):
                diff = xi[t] - xj[t]
                s += diff * diff
            D[i, j] = s
    for i in range(n):
        for j in range(i):
            D[i, j] = D[j, i]
    return out


def tsne_gradient(P, Q, num, Y, bint standard=True):
    cdef double[:, ::1] p = np.ascontiguousarray(P, dtype=np.float64)
    cdef double[:, ::1] q = np.ascontiguousarray(Q, dtype=np.float64)
    cdef double[:, ::1] w = np.ascontiguousarray(num, dtype=np.float64)
    cdef double[:, ::1] y = np.ascontiguousarray(Y, dtype=np.float64)
    cdef Py_ssize_t n = y.shape[0], d = y.shape[1]
    out = np.zeros((n, d), dtype=np.float64)
    acc_arr = np.zeros(d, dtype=np.float64)
    cdef double[:, ::1] g = out
    cdef double[::1] acc = acc_arr
    cdef Py_ssize_t i, j, t
    cdef double coef, total
    for i in range(n):
        # row i of 4 * (diag(W 1) Y - W Y), W = (P - Q) [* num]
        total = 0.0
        for t in range(d):
            acc[t] = 0.0
        for j in range(n):
            coef = p[i, j] - q[i, j]
            if standard:
                coef = coef * w[i, j]
            total += coef
            for t in range(d):
                acc[t] += coef * y[j, t]
        for t in range(d):
            g[i, t] = 4.0 * (total * y[i, t] - acc[t])
    return out


def neighbor_sweep(rank_x, rank_y, Py_ssize_t kmax):
    cdef cnp.int64_t[:, ::1] rx = np.ascontiguousarray(rank_x, dtype=np.int64)
    cdef cnp.int64_t[:, ::1] ry = np.ascontiguousarray(rank_y, dtype=np.int64)
    cdef Py_ssize_t n = rx.shape[0]
    hist = np.zeros(kmax + 2, dtype=np.int64)
    acc_val = np.zeros(kmax + 2, dtype=np.int64)
    acc_cnt = np.zeros(kmax + 2, dtype=np.int64)
    rsum = np.zeros(kmax + 2, dtype=np.int64)
    cdef cnp.int64_t[::1] h = hist, av = acc_val, ac = acc_cnt, rs = rsum
    cdef Py_ssize_t i, j
    cdef long long a, b, m, hi
    for i in range(n):
        for j in range(n):
            if j == i:
                continue
            a = rx[i, j]
            b = ry[i, j]
            m = a if a > b else b
            if m < kmax:
                h[m] += 1
            if b < kmax:
                rs[b] += a + 1
                if b < a:
                    hi = a if a < kmax else kmax
                    av[b + 1] += a + 1
                    av[hi + 1] -= a + 1
                    ac[b + 1] += 1
                    ac[hi + 1] -= 1
    overlap = np.cumsum(hist[:kmax])
    ks = np.arange(1, kmax + 1, dtype=np.int64)
    penalty = np.cumsum(acc_val)[1:kmax + 1] - ks * np.cumsum(acc_cnt)[1:kmax + 1]
    rank_sum = np.cumsum(rsum[:kmax])
    return overlap.astype(np.int64), penalty.astype(np.int64), rank_sum.astype(np.int64)


def parzen_pdf(x, mus, inv_sigma, norm, double weight):
    cdef double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, ::1] m = np.ascontiguousarray(mus, dtype=np.float64)
    cdef double[:, ::1] s = np.ascontiguousarray(inv_sigma, dtype=np.float64)
    cdef double[:, ::1] w = np.ascontiguousarray(norm, dtype=np.float64)
    cdef Py_ssize_t c = xv.shape[0], d = xv.shape[1], n = m.shape[0]
    out = np.empty((c, d))
    cdef double[:, ::1] o = out
    cdef Py_ssize_t a, b, j
    cdef double acc, z
    for a in range(c):
        for b in range(d):
            acc = 0.0
            for j in range(n):
                z = (xv[a, b] - m[j, b]) * s[j, b]
                acc += w[j, b] * exp(-0.5 * z * z)
            o[a, b] = weight + acc
    return out
