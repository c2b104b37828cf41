# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Mirrors ``_kernels_py`` exactly in semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, INFINITY

cnp.import_array()


def route_batch(const cnp.int64_t[::1] left, const cnp.int64_t[::1] right,
                const double[:, ::1] A, const double[::1] b,
                const double[:, ::1] X):
    cdef Py_ssize_t N = X.shape[0], d = X.shape[1], m = left.shape[0]
    cdef Py_ssize_t i, j
    cdef cnp.int64_t node
    cdef double u
    out = np.zeros(N, dtype=np.int64)
    cdef cnp.int64_t[::1] leaf = out
    if m == 0:
        return out
    with nogil:
        for i in range(N):
            node = 0
            while node >= 0:
                u = b[node]
                for j in range(d):
                    u = u + A[node, j] * X[i, j]
                if u > 0:
                    node = right[node]
                else:
                    node = left[node]
            leaf[i] = -1 - node
    return out


def topk_forward(const double[:, ::1] Z, Py_ssize_t k, double tau):
    cdef Py_ssize_t N = Z.shape[0], n = Z.shape[1]
    cdef Py_ssize_t i, j, p, q
    cdef double v, zmax, tot
    S_arr = np.zeros((N, n), dtype=np.float64)
    sup_arr = np.zeros((N, n), dtype=np.bool_)
    cdef double[:, ::1] S = S_arr
    cdef cnp.npy_bool[:, ::1] sup = sup_arr
    idx_arr = np.empty(k, dtype=np.intp)
    cdef Py_ssize_t[::1] idx = idx_arr
    cdef Py_ssize_t filled
    with nogil:
        for i in range(N):
            # idx holds the current top entries sorted by value desc, index asc
            filled = 0
            for j in range(n):
                v = Z[i, j]
                if filled == k and not (v > Z[i, idx[k - 1]]):
                    continue
                p = filled if filled < k else k - 1
                while p > 0 and v > Z[i, idx[p - 1]]:
                    idx[p] = idx[p - 1]
                    p -= 1
                idx[p] = j
                if filled < k:
                    filled += 1
            zmax = Z[i, idx[0]]
            tot = 0.0
            for q in range(k):
                v = exp((Z[i, idx[q]] - zmax) / tau)
                S[i, idx[q]] = v
                tot += v
            for q in range(k):
                S[i, idx[q]] = S[i, idx[q]] / tot
                sup[i, idx[q]] = 1
    return S_arr, sup_arr


def topk_backward(const double[:, ::1] S, const double[:, ::1] G, double tau):
    cdef Py_ssize_t N = S.shape[0], n = S.shape[1]
    cdef Py_ssize_t i, j
    cdef double inner
    out_arr = np.zeros((N, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for i in range(N):
            inner = 0.0
            for j in range(n):
                inner += S[i, j] * G[i, j]
            for j in range(n):
                if S[i, j] != 0.0:
                    out[i, j] = S[i, j] * (G[i, j] - inner) / tau
    return out_arr


cdef inline double _midpoint(double a, double b):
    # adjacent floats can round the midpoint up to b, which would route b left
    cdef double t = 0.5 * (a + b)
    return t if t < b else a


def best_sse_split(const double[::1] xs, const double[::1] ys, Py_ssize_t min_leaf):
    cdef Py_ssize_t n = xs.shape[0], i, nl, nr
    cdef double tot = 0.0, tot2 = 0.0, sl = 0.0, sl2 = 0.0, sse
    cdef double best = INFINITY, thr = 0.0
    if n < 2 * min_leaf:
        return best, thr
    for i in range(n):
        tot += ys[i]
        tot2 += ys[i] * ys[i]
    for i in range(n - 1):
        sl += ys[i]
        sl2 += ys[i] * ys[i]
        nl = i + 1
        nr = n - nl
        if nl < min_leaf or nr < min_leaf or not (xs[i + 1] > xs[i]):
            continue
        sse = (sl2 - sl * sl / nl) + ((tot2 - sl2) - (tot - sl) * (tot - sl) / nr)
        if sse < best:
            best = sse
            thr = _midpoint(xs[i], xs[i + 1])
    return best, thr


def best_gini_split(const double[::1] xs, const cnp.int64_t[::1] ys,
                    Py_ssize_t n_classes, Py_ssize_t min_leaf):
    cdef Py_ssize_t n = xs.shape[0], i, c, nl, nr
    cdef double best = INFINITY, thr = 0.0, score, ql, qr, cl, cr
    if n < 2 * min_leaf:
        return best, thr
    left_arr = np.zeros(n_classes, dtype=np.float64)
    total_arr = np.zeros(n_classes, dtype=np.float64)
    cdef double[::1] left = left_arr
    cdef double[::1] total = total_arr
    for i in range(n):
        total[ys[i]] += 1.0
    for i in range(n - 1):
        left[ys[i]] += 1.0
        nl = i + 1
        nr = n - nl
        if nl < min_leaf or nr < min_leaf or not (xs[i + 1] > xs[i]):
            continue
        ql = 0.0
        qr = 0.0
        for c in range(n_classes):
            cl = left[c]
            cr = total[c] - cl
            ql += cl * cl
            qr += cr * cr
        score = nl - ql / nl + nr - qr / nr
        if score < best:
            best = score
            thr = _midpoint(xs[i], xs[i + 1])
    return best, thr
