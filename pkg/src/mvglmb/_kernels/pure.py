"""Pure NumPy/Python implementations of the hot-loop kernels.

Semantics (and the uniform-stream consumption pattern) match the compiled
``_core`` extension exactly; scalar transcendentals go through ``math`` so
both implementations evaluate the same libm calls in the same order.
"""

from __future__ import annotations

import math

import numpy as np


def shadow_pair_matrix(
    centers: np.ndarray, half_lengths: np.ndarray, cam_pos: np.ndarray
) -> np.ndarray:
    """Pairwise segment-occlusion tests for one camera.

    ``out[i, j] = 1`` iff ellipsoid ``j`` intersects the segment from
    ``cam_pos`` to ``centers[i]`` (root interval overlapping [0, 1]).
    The diagonal is zero: an object does not occlude itself.
    """
    centers = np.asarray(centers, dtype=np.float64)
    half_lengths = np.asarray(half_lengths, dtype=np.float64)
    u = np.asarray(cam_pos, dtype=np.float64)
    n = centers.shape[0]
    out = np.zeros((n, n), dtype=np.uint8)
    if n < 2:
        return out

    is2 = 1.0 / (half_lengths * half_lengths)  # (n, 3)
    d = -2.0 * centers * is2
    e = (
        centers[:, 0] * centers[:, 0] * is2[:, 0]
        + centers[:, 1] * centers[:, 1] * is2[:, 1]
    ) + centers[:, 2] * centers[:, 2] * is2[:, 2] - 1.0
    g = 2.0 * is2 * u[None, :] + d  # (n, 3), per occluder
    cu = (
        (u[0] * u[0] * is2[:, 0] + u[1] * u[1] * is2[:, 1] + u[2] * u[2] * is2[:, 2])
        + (u[0] * d[:, 0] + u[1] * d[:, 1] + u[2] * d[:, 2])
    ) + e  # C coefficient per occluder j

    v = centers - u[None, :]  # (n, 3), per target i
    a = (
        v[:, 0:1] * v[:, 0:1] * is2[None, :, 0]
        + v[:, 1:2] * v[:, 1:2] * is2[None, :, 1]
        + v[:, 2:3] * v[:, 2:3] * is2[None, :, 2]
    )  # (i, j)
    b = (
        v[:, 0:1] * g[None, :, 0]
        + v[:, 1:2] * g[None, :, 1]
        + v[:, 2:3] * g[None, :, 2]
    )
    disc = b * b - 4.0 * a * cu[None, :]
    with np.errstate(invalid="ignore"):
        sq = np.sqrt(np.where(disc >= 0.0, disc, 0.0))
        t1 = (-b - sq) / (2.0 * a)
        t2 = (-b + sq) / (2.0 * a)
        hit = (disc >= 0.0) & (t1 <= 1.0) & (t2 >= 0.0)
    np.fill_diagonal(hit, False)
    out[hit] = 1
    return out


def gibbs_sweeps(
    eta_exp: np.ndarray,
    rowmax: np.ndarray,
    log_exist: np.ndarray,
    log_dead: np.ndarray,
    m_per_cam: np.ndarray,
    uniforms: np.ndarray,
) -> np.ndarray:
    """Run the association Gibbs chain and emit its state after every sweep.

    Parameters
    ----------
    eta_exp : (N, C, M+1) detection factors ``exp(log_eta - rowmax)``;
        column 0 is the misdetection entry, columns beyond a camera's
        detection count must be zero.
    rowmax : (N, C) the log shifts taken out of ``eta_exp``.
    log_exist, log_dead : (N,) log survival/birth probability and its
        complement for each row.
    m_per_cam : (C,) detection counts.
    uniforms : (S, N, 1+C) pregenerated uniform draws; exactly ``1 + C``
        draws are consumed per row per sweep regardless of outcomes.

    Returns
    -------
    (S, N, C) int32 association samples; -1 marks a dead row.
    """
    eta_exp = np.asarray(eta_exp, dtype=np.float64)
    rowmax = np.asarray(rowmax, dtype=np.float64)
    log_exist = np.asarray(log_exist, dtype=np.float64)
    log_dead = np.asarray(log_dead, dtype=np.float64)
    m_per_cam = np.asarray(m_per_cam, dtype=np.int64)
    uniforms = np.asarray(uniforms, dtype=np.float64)

    n_rows, n_cams, _ = eta_exp.shape
    n_sweeps = uniforms.shape[0]
    samples = np.empty((n_sweeps, n_rows, n_cams), dtype=np.int32)

    gamma = np.zeros((n_rows, n_cams), dtype=np.int32)  # all live, misdetected
    owner = [np.full(int(m_per_cam[c]) + 1, -1, dtype=np.int32) for c in range(n_cams)]

    for s in range(n_sweeps):
        for n in range(n_rows):
            cums = []
            log_live = log_exist[n]
            for c in range(n_cams):
                m = int(m_per_cam[c])
                w = eta_exp[n, c, : m + 1].copy()
                own = owner[c]
                for j in range(1, m + 1):
                    if own[j] != -1 and own[j] != n:
                        w[j] = 0.0
                cum = np.cumsum(w)
                cums.append(cum)
                sc = float(cum[-1]) if m >= 0 else 0.0
                if sc > 0.0:
                    log_live += rowmax[n, c] + math.log(sc)
                else:
                    log_live = -math.inf
            ld = log_dead[n]
            if log_live == -math.inf and ld == -math.inf:
                continue  # stuck row: keep state, uniforms still consumed
            if log_live == -math.inf:
                p_live = 0.0
            elif ld == -math.inf:
                p_live = 1.0
            else:
                p_live = 1.0 / (1.0 + math.exp(ld - log_live))
            if uniforms[s, n, 0] < p_live:
                for c in range(n_cams):
                    m = int(m_per_cam[c])
                    cum = cums[c]
                    total = float(cum[-1])
                    v = uniforms[s, n, 1 + c] * total
                    sel = int(np.searchsorted(cum, v, side="right"))
                    if sel > m:
                        sel = m
                    own = owner[c]
                    while sel > 0 and (
                        eta_exp[n, c, sel] == 0.0
                        or (own[sel] != -1 and own[sel] != n)
                    ):
                        sel -= 1
                    old = gamma[n, c]
                    if old > 0 and old != sel:
                        own[old] = -1
                    if sel > 0:
                        own[sel] = n
                    gamma[n, c] = sel
            else:
                for c in range(n_cams):
                    old = gamma[n, c]
                    if old > 0:
                        owner[c][old] = -1
                    gamma[n, c] = -1
        samples[s] = gamma
    return samples
