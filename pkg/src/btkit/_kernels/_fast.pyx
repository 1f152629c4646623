# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Cython kernels. Mirrors btkit._kernels._ref bit-for-bit; see that module
for the contracts."""

from libc.math cimport log, INFINITY

import numpy as np

BACKEND = "cython"


def argmax_tie(double[::1] p):
    cdef Py_ssize_t i, best = 0
    cdef double best_p = p[0]
    for i in range(1, p.shape[0]):
        if p[i] > best_p:
            best_p = p[i]
            best = i
    return best


def topk_tie(double[::1] p, Py_ssize_t k):
    cdef Py_ssize_t n = p.shape[0]
    if k > n:
        k = n
    out = []
    taken_arr = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] taken = taken_arr
    cdef Py_ssize_t m, i, best
    cdef double best_p
    for m in range(k):
        best = -1
        best_p = -1.0
        for i in range(n):
            if not taken[i] and p[i] > best_p:
                best_p = p[i]
                best = i
        taken[best] = 1
        out.append(best)
    return out


def sample_cdf(double[::1] p, double total, double u):
    cdef double target = u * total
    cdef double c = 0.0
    cdef Py_ssize_t i, last = -1
    cdef double v
    for i in range(p.shape[0]):
        v = p[i]
        if v > 0.0:
            c += v
            last = i
            if c > target:
                return i
    return last


def mix2(double[::1] out, double[::1] a, double[::1] b, double wa, double wb):
    cdef double total = 0.0
    cdef double v
    cdef Py_ssize_t i
    for i in range(out.shape[0]):
        v = wa * a[i] + wb * b[i]
        out[i] = v
        total += v
    return total


def scale_sparse_add(double[::1] vec, double gamma, int[::1] idx, double[::1] val):
    cdef Py_ssize_t i, j
    for i in range(vec.shape[0]):
        vec[i] *= gamma
    for j in range(idx.shape[0]):
        vec[idx[j]] += val[j]


def add_sparse(double[::1] vec, int[::1] idx, double[::1] val, double scale):
    cdef Py_ssize_t j
    for j in range(idx.shape[0]):
        vec[idx[j]] += scale * val[j]


def beam_step(double[::1] scores, double[:, ::1] dists, double[::1] totals,
              Py_ssize_t k):
    cdef Py_ssize_t rows = scores.shape[0]
    cdef Py_ssize_t cols = dists.shape[1]
    logtot_arr = np.empty(rows, dtype=np.float64)
    cdef double[::1] logtot = logtot_arr
    cdef Py_ssize_t i, j, m, best_i, best_j
    for i in range(rows):
        logtot[i] = log(totals[i])
    taken_arr = np.zeros((rows, cols), dtype=np.uint8)
    cdef unsigned char[:, ::1] taken = taken_arr
    parents = []
    tokens = []
    out_scores = []
    cdef double best_s, s, v
    for m in range(k):
        best_i = -1
        best_j = -1
        best_s = -INFINITY
        for i in range(rows):
            for j in range(cols):
                if taken[i, j]:
                    continue
                v = dists[i, j]
                if v <= 0.0:
                    continue
                s = scores[i] + (log(v) - logtot[i])
                if s > best_s:
                    best_s = s
                    best_i = i
                    best_j = j
        if best_i < 0:
            break
        taken[best_i, best_j] = 1
        parents.append(best_i)
        tokens.append(best_j)
        out_scores.append(best_s)
    return parents, tokens, out_scores


def em_estep(long long[::1] ev_off, int[::1] ev_pairs, double[::1] ev_weight,
             double[::1] t, double[::1] counts):
    cdef double ll = 0.0
    cdef Py_ssize_t n_events = ev_off.shape[0] - 1
    cdef Py_ssize_t e, q
    cdef long long lo, hi
    cdef double denom, w
    cdef int pidx
    for e in range(n_events):
        lo = ev_off[e]
        hi = ev_off[e + 1]
        denom = 0.0
        for q in range(lo, hi):
            denom += t[ev_pairs[q]]
        w = ev_weight[e]
        if denom <= 0.0:
            ll = -INFINITY
            continue
        ll += w * (log(denom) - log(<double> (hi - lo)))
        for q in range(lo, hi):
            pidx = ev_pairs[q]
            counts[pidx] += w * t[pidx] / denom
    return ll


def group_normalize(double[::1] counts, int[::1] group, Py_ssize_t n_groups,
                    double[::1] out):
    sums_arr = np.zeros(n_groups, dtype=np.float64)
    cdef double[::1] sums = sums_arr
    cdef Py_ssize_t p
    cdef double s
    for p in range(counts.shape[0]):
        sums[group[p]] += counts[p]
    for p in range(counts.shape[0]):
        s = sums[group[p]]
        out[p] = counts[p] / s if s > 0.0 else 0.0
