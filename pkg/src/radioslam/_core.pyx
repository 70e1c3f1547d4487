# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled particle kernels; see _core_py.py for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport atan2, sqrt, exp, log, log10, ceil, M_PI

cnp.import_array()

DEF AOA_BIT = 1
DEF TOA_BIT = 2
DEF RSS_BIT = 4
DEF CUTOFF_SQ = 144.0


def legacy_factors(double[:, ::1] pos, double[::1] alpha, double[::1] omega,
                   double[:, :, ::1] feats, double[:, ::1] meas, int flags,
                   double sa, double st, double sr, double log_scale):
    cdef Py_ssize_t K = feats.shape[0]
    cdef Py_ssize_t J = meas.shape[0]
    cdef Py_ssize_t N = pos.shape[0]
    out_arr = np.zeros((K, J, N))
    cdef double[:, :, ::1] out = out_arr
    if K == 0 or J == 0:
        return out_arr
    cdef double two_pi = 2.0 * M_PI
    cdef double lsq = 0.5 * log(two_pi)
    cdef double base = log_scale
    cdef bint use_a = flags & AOA_BIT
    cdef bint use_t = flags & TOA_BIT
    cdef bint use_r = flags & RSS_BIT
    if use_a:
        base -= log(sa) + lsq
    if use_t:
        base -= log(st) + lsq
    if use_r:
        base -= log(sr) + lsq
    cdef double inv_sa2 = 1.0 / (sa * sa)
    cdef double inv_st2 = 1.0 / (st * st)
    cdef double inv_sr2 = 1.0 / (sr * sr)
    cdef Py_ssize_t k, j, p
    cdef double dx, dy, dist, theta = 0.0, rng_pred = 0.0, rss_pred = 0.0, r, acc
    for k in range(K):
        for p in range(N):
            dx = feats[k, p, 0] - pos[p, 0]
            dy = feats[k, p, 1] - pos[p, 1]
            dist = sqrt(dx * dx + dy * dy)
            if use_a:
                theta = atan2(dy, dx) + alpha[p]
            if use_t:
                rng_pred = dist - omega[p]
            if use_r:
                rss_pred = -10.0 * feats[k, p, 3] * log10(dist) + feats[k, p, 2]
            for j in range(J):
                acc = 0.0
                if use_t:
                    r = meas[j, 1] - rng_pred
                    acc = r * r * inv_st2
                    if acc > CUTOFF_SQ:
                        continue
                if use_a:
                    r = meas[j, 0] - theta
                    r -= two_pi * ceil((r - M_PI) / two_pi)
                    acc += r * r * inv_sa2
                    if acc > CUTOFF_SQ:
                        continue
                if use_r:
                    r = meas[j, 2] - rss_pred
                    acc += r * r * inv_sr2
                    if acc > CUTOFF_SQ:
                        continue
                out[k, j, p] = exp(base - 0.5 * acc)
    return out_arr


def systematic_indices(double[::1] weights, double u0):
    cdef Py_ssize_t n = weights.shape[0]
    idx_arr = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t[::1] idx = idx_arr
    cdef double c = weights[0]
    cdef double point
    cdef Py_ssize_t i, j = 0
    for i in range(n):
        point = (u0 + i) / n
        while point >= c and j < n - 1:
            j += 1
            c += weights[j]
        idx[i] = j
    return idx_arr


def gather_slide(double[:, ::1] parts, Py_ssize_t[::1] anc, double[:, ::1] kin, double[::1] push):
    cdef Py_ssize_t n = anc.shape[0]
    cdef Py_ssize_t c = parts.shape[1]
    out_arr = np.empty((n, c), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef bint do_push = push.shape[0] > 0
    cdef Py_ssize_t i, k, a
    cdef double dx, dy, dist, scale
    for i in range(n):
        a = anc[i]
        for k in range(c):
            out[i, k] = parts[a, k]
        if do_push:
            dx = out[i, 0] - kin[i, 0]
            dy = out[i, 1] - kin[i, 1]
            dist = sqrt(dx * dx + dy * dy)
            scale = dist + push[i]
            if scale < 1e-6:
                scale = 1e-6
            scale = scale / (dist if dist > 1e-12 else 1e-12)
            out[i, 0] = kin[i, 0] + scale * dx
            out[i, 1] = kin[i, 1] + scale * dy
    return out_arr
