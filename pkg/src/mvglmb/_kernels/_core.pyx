# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot-loop kernels: pairwise shadow tests and the Gibbs sweep.

Semantics mirror ``mvglmb._kernels.pure`` exactly, including the arithmetic
order and the uniform-stream consumption pattern, so the two implementations
produce bit-identical outputs for identical inputs.
"""

from libc.math cimport exp, log, sqrt

import numpy as np


def shadow_pair_matrix(centers, half_lengths, cam_pos):
    """Pairwise segment-occlusion tests for one camera; see pure.shadow_pair_matrix."""
    cdef double[:, ::1] cen = np.ascontiguousarray(centers, dtype=np.float64)
    cdef double[:, ::1] hl = np.ascontiguousarray(half_lengths, dtype=np.float64)
    cdef double[::1] u = np.ascontiguousarray(cam_pos, dtype=np.float64)
    cdef Py_ssize_t n = cen.shape[0]
    out_arr = np.zeros((n, n), dtype=np.uint8)
    cdef unsigned char[:, ::1] out = out_arr
    if n < 2:
        return out_arr

    is2_arr = np.empty((n, 3), dtype=np.float64)
    d_arr = np.empty((n, 3), dtype=np.float64)
    g_arr = np.empty((n, 3), dtype=np.float64)
    cu_arr = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] is2 = is2_arr
    cdef double[:, ::1] d = d_arr
    cdef double[:, ::1] g = g_arr
    cdef double[::1] cu = cu_arr
    cdef Py_ssize_t i, j, k
    cdef double e, a, b, disc, sq, t1, t2, v0, v1, v2

    for j in range(n):
        for k in range(3):
            is2[j, k] = 1.0 / (hl[j, k] * hl[j, k])
            d[j, k] = -2.0 * cen[j, k] * is2[j, k]
            g[j, k] = 2.0 * is2[j, k] * u[k] + d[j, k]
        e = (cen[j, 0] * cen[j, 0] * is2[j, 0]
             + cen[j, 1] * cen[j, 1] * is2[j, 1]) \
            + cen[j, 2] * cen[j, 2] * is2[j, 2] - 1.0
        cu[j] = ((u[0] * u[0] * is2[j, 0] + u[1] * u[1] * is2[j, 1]
                  + u[2] * u[2] * is2[j, 2])
                 + (u[0] * d[j, 0] + u[1] * d[j, 1] + u[2] * d[j, 2])) + e

    for i in range(n):
        v0 = cen[i, 0] - u[0]
        v1 = cen[i, 1] - u[1]
        v2 = cen[i, 2] - u[2]
        for j in range(n):
            if j == i:
                continue
            a = v0 * v0 * is2[j, 0] + v1 * v1 * is2[j, 1] + v2 * v2 * is2[j, 2]
            b = v0 * g[j, 0] + v1 * g[j, 1] + v2 * g[j, 2]
            disc = b * b - 4.0 * a * cu[j]
            if disc < 0.0:
                continue
            sq = sqrt(disc)
            t1 = (-b - sq) / (2.0 * a)
            t2 = (-b + sq) / (2.0 * a)
            if t1 <= 1.0 and t2 >= 0.0:
                out[i, j] = 1
    return out_arr


def gibbs_sweeps(eta_exp, rowmax, log_exist, log_dead, m_per_cam, uniforms):
    """Association Gibbs chain, one emitted sample per sweep; see pure.gibbs_sweeps."""
    cdef double[:, :, ::1] eta = np.ascontiguousarray(eta_exp, dtype=np.float64)
    cdef double[:, ::1] rmax = np.ascontiguousarray(rowmax, dtype=np.float64)
    cdef double[::1] lex = np.ascontiguousarray(log_exist, dtype=np.float64)
    cdef double[::1] ldead = np.ascontiguousarray(log_dead, dtype=np.float64)
    cdef long[::1] mpc = np.ascontiguousarray(m_per_cam, dtype=np.int64)
    cdef double[:, :, ::1] uni = np.ascontiguousarray(uniforms, dtype=np.float64)

    cdef Py_ssize_t n_rows = eta.shape[0]
    cdef Py_ssize_t n_cams = eta.shape[1]
    cdef Py_ssize_t width = eta.shape[2]
    cdef Py_ssize_t n_sweeps = uni.shape[0]

    samples_arr = np.empty((n_sweeps, n_rows, n_cams), dtype=np.int32)
    cdef int[:, :, ::1] samples = samples_arr
    gamma_arr = np.zeros((n_rows, n_cams), dtype=np.int32)
    cdef int[:, ::1] gamma = gamma_arr
    owner_arr = np.full((n_cams, width), -1, dtype=np.int32)
    cdef int[:, ::1] owner = owner_arr
    cum_arr = np.zeros((n_cams, width), dtype=np.float64)
    cdef double[:, ::1] cum = cum_arr

    cdef double NEG_INF = -float("inf")
    cdef Py_ssize_t s, n, c, j, m, sel
    cdef double acc, w, log_live, sc, ld, p_live, total, v
    cdef int old
    cdef bint live

    for s in range(n_sweeps):
        for n in range(n_rows):
            log_live = lex[n]
            for c in range(n_cams):
                m = mpc[c]
                acc = 0.0
                for j in range(m + 1):
                    w = eta[n, c, j]
                    if j > 0 and owner[c, j] != -1 and owner[c, j] != n:
                        w = 0.0
                    acc = acc + w
                    cum[c, j] = acc
                sc = acc
                if sc > 0.0:
                    log_live = log_live + rmax[n, c] + log(sc)
                else:
                    log_live = NEG_INF
            ld = ldead[n]
            if log_live == NEG_INF and ld == NEG_INF:
                continue
            if log_live == NEG_INF:
                p_live = 0.0
            elif ld == NEG_INF:
                p_live = 1.0
            else:
                p_live = 1.0 / (1.0 + exp(ld - log_live))
            live = uni[s, n, 0] < p_live
            if live:
                for c in range(n_cams):
                    m = mpc[c]
                    total = cum[c, m]
                    v = uni[s, n, 1 + c] * total
                    sel = 0
                    while sel <= m and cum[c, sel] <= v:
                        sel += 1
                    if sel > m:
                        sel = m
                    while sel > 0 and (
                        eta[n, c, sel] == 0.0
                        or (owner[c, sel] != -1 and owner[c, sel] != n)
                    ):
                        sel -= 1
                    old = gamma[n, c]
                    if old > 0 and old != sel:
                        owner[c, old] = -1
                    if sel > 0:
                        owner[c, sel] = n
                    gamma[n, c] = sel
            else:
                for c in range(n_cams):
                    old = gamma[n, c]
                    if old > 0:
                        owner[c, old] = -1
                    gamma[n, c] = -1
        for n in range(n_rows):
            for c in range(n_cams):
                samples[s, n, c] = gamma[n, c]
    return samples_arr
