"""Gaussian densities and the unscented box-measurement update.

The measurement map (9-vector state -> 4-vector box) is nonlinear through the
ellipsoid projection, so updates run an unscented transform with parameters
alpha=1, beta=2, kappa=0. With state dimension 9 this gives spread 3 and
weights Wm0=0, Wc0=2, Wi=1/18.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .geometry import CameraModel, project_ellipsoids
from .models import POS_IDX, SHAPE_IDX, MeasurementModel

_JITTER = 1e-9


class UpdateFailedError(RuntimeError):
    """Raised when too many sigma points project degenerately."""


@dataclass(frozen=True)
class Gaussian:
    mean: np.ndarray
    cov: np.ndarray
    log_weight: float = 0.0

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise ValueError("covariance shape does not match mean")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)


def log_sum_exp(values) -> float:
    """log(sum(exp(values))) without overflow; empty input is an error."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("log_sum_exp of an empty sequence")
    return float(logsumexp(arr))


def kalman_predict(g: Gaussian, f: np.ndarray, drift: np.ndarray, q: np.ndarray) -> Gaussian:
    mean = f @ g.mean + drift
    cov = f @ g.cov @ f.T + q
    return Gaussian(mean=mean, cov=0.5 * (cov + cov.T), log_weight=g.log_weight)


def _safe_cholesky(cov: np.ndarray) -> np.ndarray:
    n = cov.shape[0]
    try:
        return np.linalg.cholesky(cov + _JITTER * np.eye(n))
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
        vals = np.maximum(vals, 1e-12)
        return np.linalg.cholesky(vecs @ np.diag(vals) @ vecs.T + _JITTER * np.eye(n))


def sigma_points(g: Gaussian) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sigma points (2n+1, n) with mean and covariance weights."""
    n = g.mean.size
    chol = _safe_cholesky(g.cov)
    spread = np.sqrt(float(n)) * chol  # alpha=1, kappa=0 -> lambda=0
    pts = np.empty((2 * n + 1, n))
    pts[0] = g.mean
    pts[1 : n + 1] = g.mean + spread.T
    pts[n + 1 :] = g.mean - spread.T
    w_mean = np.full(2 * n + 1, 1.0 / (2.0 * n))
    w_mean[0] = 0.0
    w_cov = w_mean.copy()
    w_cov[0] = 2.0  # beta=2 correction on the center point
    return pts, w_mean, w_cov


@dataclass(frozen=True)
class MeasurementPrediction:
    """Unscented transform of one Gaussian through one camera's box map."""

    z_mean: np.ndarray  # (4,)
    s: np.ndarray  # (4, 4) innovation covariance
    cross: np.ndarray  # (n, 4)
    chol_s: np.ndarray = field(repr=False)

    def loglik(self, z: np.ndarray) -> float:
        return float(self.loglik_many(np.asarray(z, dtype=float)[None, :])[0])

    def loglik_many(self, zs: np.ndarray) -> np.ndarray:
        diff = zs - self.z_mean
        y = np.linalg.solve(self.chol_s, diff.T)
        maha = np.sum(y * y, axis=0)
        logdet = 2.0 * np.sum(np.log(np.diag(self.chol_s)))
        k = self.z_mean.size
        return -0.5 * (maha + logdet + k * np.log(2.0 * np.pi))


def _project_states(pts: np.ndarray, camera: CameraModel) -> tuple[np.ndarray, np.ndarray]:
    centers = pts[:, POS_IDX]
    half = np.exp(pts[:, SHAPE_IDX])
    box4, ok, _ = project_ellipsoids(centers, half, camera)
    return box4, ok


def unscented_boxes(
    g: Gaussian,
    camera: CameraModel,
    measure_fn: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]] | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Project the sigma points of ``g`` through ``camera``'s box map.

    Returns (points, mean weights, cov weights, raw boxes) with degenerate
    points dropped and weights renormalized. ``measure_fn`` overrides the
    projection (testing hook); it maps sigma points (K, n) to
    (boxes (K, 4), ok mask (K,)).

    Raises UpdateFailedError when at least half the sigma points are
    projection-degenerate.
    """
    pts, w_mean, w_cov = sigma_points(g)
    if measure_fn is None:
        boxes, ok = _project_states(pts, camera)
    else:
        boxes, ok = measure_fn(pts)
    n_pts = pts.shape[0]
    n_bad = int(n_pts - np.count_nonzero(ok))
    if 2 * n_bad >= n_pts:
        raise UpdateFailedError(
            f"{n_bad}/{n_pts} sigma points degenerate under camera projection"
        )
    if n_bad:
        pts, boxes = pts[ok], boxes[ok]
        w_mean, w_cov = w_mean[ok], w_cov[ok]
        total = w_mean.sum()
        if total <= 1e-12:
            raise UpdateFailedError("surviving sigma points carry no mean weight")
        w_mean = w_mean / total
        w_cov = w_cov / total
    return pts, w_mean, w_cov, boxes


def prediction_from_boxes(
    g: Gaussian,
    pts: np.ndarray,
    w_mean: np.ndarray,
    w_cov: np.ndarray,
    boxes: np.ndarray,
    offset: np.ndarray | float,
    noise_cov: np.ndarray,
) -> MeasurementPrediction:
    """Finish the unscented transform for one measurement-noise configuration."""
    shifted = boxes + offset
    z_mean = w_mean @ shifted
    dz = shifted - z_mean
    dx = pts - g.mean
    s = (w_cov[:, None] * dz).T @ dz + noise_cov
    s = 0.5 * (s + s.T)
    cross = (w_cov[:, None] * dx).T @ dz
    chol = _safe_cholesky(s)
    return MeasurementPrediction(z_mean=z_mean, s=s, cross=cross, chol_s=chol)


def unscented_measurement(
    g: Gaussian,
    meas: MeasurementModel,
    camera: CameraModel,
    measure_fn: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]] | None = None,
) -> MeasurementPrediction:
    """One-noise-configuration unscented transform through ``camera``."""
    pts, w_mean, w_cov, boxes = unscented_boxes(g, camera, measure_fn=measure_fn)
    offset = 0.0 if measure_fn is not None else meas.offset
    return prediction_from_boxes(g, pts, w_mean, w_cov, boxes, offset, meas.cov)


def ukf_posterior(g: Gaussian, pred: MeasurementPrediction, z: np.ndarray) -> Gaussian:
    """Condition ``g`` on box ``z`` using a precomputed measurement prediction."""
    z = np.asarray(z, dtype=float)
    # Gain via two triangular solves: K = cross @ inv(S)
    tmp = np.linalg.solve(pred.chol_s, pred.cross.T)
    gain = np.linalg.solve(pred.chol_s.T, tmp).T
    mean = g.mean + gain @ (z - pred.z_mean)
    cov = g.cov - gain @ pred.s @ gain.T
    cov = 0.5 * (cov + cov.T)
    return Gaussian(mean=mean, cov=cov, log_weight=g.log_weight)


def ukf_update(
    g: Gaussian,
    z,
    meas: MeasurementModel,
    camera: CameraModel,
    measure_fn: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]] | None = None,
) -> tuple[Gaussian, float]:
    """One-shot unscented update; returns the posterior and marginal log-likelihood."""
    if hasattr(z, "as_vector"):
        z = z.as_vector()
    pred = unscented_measurement(g, meas, camera, measure_fn=measure_fn)
    z = np.asarray(z, dtype=float)
    return ukf_posterior(g, pred, z), pred.loglik(z)


def moment_match(log_weights: np.ndarray, gaussians: list[Gaussian]) -> Gaussian:
    """Collapse a weighted Gaussian mixture to a single moment-matched Gaussian."""
    if not gaussians:
        raise ValueError("cannot moment-match an empty mixture")
    lw = np.asarray(log_weights, dtype=float)
    w = np.exp(lw - log_sum_exp(lw))
    mean = sum(wi * gi.mean for wi, gi in zip(w, gaussians))
    cov = np.zeros_like(gaussians[0].cov)
    for wi, gi in zip(w, gaussians):
        d = (gi.mean - mean)[:, None]
        cov += wi * (gi.cov + d @ d.T)
    return Gaussian(mean=mean, cov=0.5 * (cov + cov.T))
