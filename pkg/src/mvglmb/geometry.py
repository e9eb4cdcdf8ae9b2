"""Deterministic 3D/2D geometry for ellipsoidal targets and pinhole cameras.

Conventions used throughout the package:

* An ellipsoid is axis-aligned in the world frame, described by its center
  (meters) and three positive half-lengths (meters).  Kinematic state vectors
  store the *logarithms* of the half-lengths; callers exponentiate before
  crossing into this module.
* A camera is a 3x4 projection matrix ``proj`` (pixels) plus its 3D position.
  The third row of ``proj`` must yield positive depth for points in front of
  the camera.
* A bounding box is a pixel center plus the componentwise logarithm of its
  (width, height).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class InvalidShapeError(ValueError):
    """An ellipsoid (or box) has a non-positive extent."""


class ProjectionDegenerateError(ValueError):
    """The ellipsoid does not project to a finite image ellipse."""


_COND_LIMIT = 1e12
_EIG_FLOOR = 1e-12


@dataclass(frozen=True)
class Ellipsoid:
    """Axis-aligned ellipsoid: ``center`` (m) and positive ``half_lengths`` (m)."""

    center: np.ndarray
    half_lengths: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "half_lengths", np.asarray(self.half_lengths, dtype=float))
        if self.center.shape != (3,) or self.half_lengths.shape != (3,):
            raise InvalidShapeError("ellipsoid needs 3-vector center and half_lengths")
        if not np.all(np.isfinite(self.center)):
            raise InvalidShapeError("ellipsoid center must be finite")
        if not np.all(self.half_lengths > 0):
            raise InvalidShapeError("ellipsoid half_lengths must be positive")

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned bounding box as (min corner, max corner)."""
        return self.center - self.half_lengths, self.center + self.half_lengths


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera: 3x4 projection (pixels), 3D position (m), image size."""

    proj: np.ndarray
    position: np.ndarray
    image_width: float
    image_height: float
    active: bool = True

    def __post_init__(self):
        object.__setattr__(self, "proj", np.asarray(self.proj, dtype=float))
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        if self.proj.shape != (3, 4):
            raise ValueError("camera projection must be 3x4")
        if np.linalg.matrix_rank(self.proj) != 3:
            raise ValueError("camera projection must have rank 3")
        if self.position.shape != (3,) or not np.all(np.isfinite(self.position)):
            raise ValueError("camera position must be a finite 3-vector")


@dataclass(frozen=True)
class BoundingBox:
    """Image-plane box: pixel ``center`` and log of (width, height)."""

    center: np.ndarray
    log_extent: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "log_extent", np.asarray(self.log_extent, dtype=float))
        if self.center.shape != (2,) or self.log_extent.shape != (2,):
            raise ValueError("bounding box needs 2-vector center and log_extent")
        if not (np.all(np.isfinite(self.center)) and np.all(np.isfinite(self.log_extent))):
            raise ValueError("bounding box fields must be finite")

    def as_vector(self) -> np.ndarray:
        """4-vector (cx, cy, log_w, log_h) used by the measurement models."""
        return np.concatenate([self.center, self.log_extent])


def camera_position_from_proj(proj: np.ndarray) -> np.ndarray:
    """Recover the camera center as the right null-space point of ``proj``.

    The null vector is dehomogenized; a camera at infinity (null vector with
    vanishing last coordinate) raises ``ValueError``.
    """
    proj = np.asarray(proj, dtype=float)
    _, _, vt = np.linalg.svd(proj)
    h = vt[-1]
    if abs(h[3]) < 1e-12:
        raise ValueError("camera center at infinity (affine camera not supported)")
    return h[:3] / h[3]


def shadow_quadratic(
    target_pos: np.ndarray, occluder: Ellipsoid, cam_pos: np.ndarray
) -> tuple[float, float, float]:
    """Coefficients (A, B, C) of the segment-ellipsoid intersection quadratic.

    The segment is p(t) = cam_pos + t (target_pos - cam_pos), t in [0, 1];
    A t^2 + B t + C <= 0 iff p(t) is inside the occluder.
    """
    u = np.asarray(cam_pos, dtype=float)
    x = np.asarray(target_pos, dtype=float)
    yp = occluder.center
    ys = occluder.half_lengths
    inv_s2 = 1.0 / (ys * ys)
    d_y = -2.0 * yp * inv_s2
    e_y = float(np.dot(yp * inv_s2, yp)) - 1.0
    v = x - u
    a = float(np.dot(v * inv_s2, v))
    b = float(np.dot(v, 2.0 * inv_s2 * u + d_y))
    c = float(np.dot(u * inv_s2, u) + np.dot(u, d_y)) + e_y
    return a, b, c


def shadow_indicator(target_pos: np.ndarray, occluder: Ellipsoid, camera: CameraModel) -> bool:
    """True iff the camera-to-target segment intersects the occluder.

    Real-root test on the closed-form quadratic, with the root interval
    required to overlap [0, 1] (an occluder strictly behind the target, or
    behind the camera, does not occlude).
    """
    if not np.all(occluder.half_lengths > 0):
        raise InvalidShapeError("occluder half_lengths must be positive")
    a, b, c = shadow_quadratic(target_pos, occluder, camera.position)
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return False
    sq = math.sqrt(disc)
    t1 = (-b - sq) / (2.0 * a)
    t2 = (-b + sq) / (2.0 * a)
    return t1 <= 1.0 and t2 >= 0.0


def ellipsoid_quadric(center: np.ndarray, half_lengths: np.ndarray) -> np.ndarray:
    """Homogeneous 4x4 quadric Q with [p;1]^T Q [p;1] <= 0 inside the ellipsoid."""
    inv_s2 = 1.0 / (half_lengths * half_lengths)
    d = -2.0 * center * inv_s2
    e = float(np.dot(center * inv_s2, center)) - 1.0
    q = np.empty((4, 4))
    q[:3, :3] = np.diag(inv_s2)
    q[:3, 3] = d / 2.0
    q[3, :3] = d / 2.0
    q[3, 3] = e
    return q


def project_ellipsoids(
    centers: np.ndarray, half_lengths: np.ndarray, camera: CameraModel
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project a batch of ellipsoids to image boxes via quadric projection.

    Parameters
    ----------
    centers, half_lengths : (N, 3) arrays.

    Returns
    -------
    box4 : (N, 4) array of (cx, cy, log_w, log_h); rows with ``ok`` False are
        filled with NaN.
    ok : (N,) boolean array, False where the projection is degenerate (object
        not strictly in front of the camera, non-elliptical conic, or
        ill-conditioned inversion).
    depth : (N,) array of center depths (diagnostic).
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    half_lengths = np.atleast_2d(np.asarray(half_lengths, dtype=float))
    n = centers.shape[0]
    p = camera.proj
    box4 = np.full((n, 4), np.nan)
    ok = np.zeros(n, dtype=bool)

    # Cheirality: the whole ellipsoid must be strictly in front of the
    # principal plane (support function of the ellipsoid along the depth row).
    a3 = p[2, :3]
    depth_c = centers @ a3 + p[2, 3]
    depth_spread = np.sqrt(((half_lengths * a3) ** 2).sum(axis=1))
    front = depth_c - depth_spread > 0.0
    valid = front & np.all(half_lengths > 0, axis=1)
    if not np.any(valid):
        return box4, ok, depth_c

    idx = np.nonzero(valid)[0]
    cen = centers[idx]
    hl = half_lengths[idx]

    # Primal quadrics (k, 4, 4), inverted via solve against P^T.
    inv_s2 = 1.0 / (hl * hl)
    d = -2.0 * cen * inv_s2
    e = np.einsum("ij,ij->i", cen * inv_s2, cen) - 1.0
    quad = np.zeros((len(idx), 4, 4))
    quad[:, 0, 0] = inv_s2[:, 0]
    quad[:, 1, 1] = inv_s2[:, 1]
    quad[:, 2, 2] = inv_s2[:, 2]
    quad[:, :3, 3] = d / 2.0
    quad[:, 3, :3] = d / 2.0
    quad[:, 3, 3] = e

    good = np.ones(len(idx), dtype=bool)
    with np.errstate(all="ignore"):
        try:
            qinv_pt = np.linalg.solve(quad, np.broadcast_to(p.T, (len(idx), 4, 3)))
        except np.linalg.LinAlgError:
            qinv_pt = np.stack(
                [_solve_or_nan(quad[k], p.T) for k in range(len(idx))]
            )
        dual = p @ qinv_pt  # (k, 3, 3) dual conics
        good &= np.all(np.isfinite(dual), axis=(1, 2))
        cond = np.full(len(idx), np.inf)
        cond[good] = np.linalg.cond(dual[good])
        good &= cond < _COND_LIMIT
        conic = np.full_like(dual, np.nan)
        if np.any(good):
            conic[good] = np.linalg.solve(dual[good], np.broadcast_to(np.eye(3), (int(good.sum()), 3, 3)))

        # Split conic [[A2, r], [r^T, q]]; normalize sign so A2 is PD.
        a2 = 0.5 * (conic[:, :2, :2] + conic[:, :2, :2].transpose(0, 2, 1))
        r = conic[:, :2, 2]
        q = conic[:, 2, 2]
        evals = np.full((len(idx), 2), np.nan)
        evecs = np.full((len(idx), 2, 2), np.nan)
        if np.any(good):
            evals[good], evecs[good] = np.linalg.eigh(a2[good])
        flip = good & (evals[:, 1] < 0)
        evals[flip] *= -1.0
        r[flip] *= -1.0
        q[flip] *= -1.0
        good &= np.all(np.isfinite(evals), axis=1)
        good &= (evals > _EIG_FLOOR).all(axis=1)

        # Box center and extents from the eigen-form of the conic.
        ut_r = np.einsum("kji,kj->ki", evecs, r)  # U^T r
        inv_d_ut_r = ut_r / evals
        center_px = -np.einsum("kij,kj->ki", evecs, inv_d_ut_r)
        nu2 = np.einsum("ki,ki->k", ut_r, inv_d_ut_r) - q
        good &= nu2 > 0.0
        nu = np.sqrt(np.where(nu2 > 0, nu2, np.nan))
        # rows of U scaled by D^{-1/2}: extent_i = 2 nu * ||U[i,:] / sqrt(D)||
        row_scale = evecs / np.sqrt(evals)[:, None, :]
        extents = 2.0 * nu[:, None] * np.sqrt((row_scale**2).sum(axis=2))
        good &= np.all(extents > 0, axis=1) & np.all(np.isfinite(extents), axis=1)
        good &= np.all(np.isfinite(center_px), axis=1)

    out = np.full((len(idx), 4), np.nan)
    out[good, :2] = center_px[good]
    out[good, 2:] = np.log(extents[good])
    box4[idx] = out
    ok[idx] = good
    return box4, ok, depth_c


def _solve_or_nan(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(a, b)
    except np.linalg.LinAlgError:
        return np.full((a.shape[0], b.shape[1]), np.nan)


def project_ellipsoid(obj: Ellipsoid, camera: CameraModel) -> BoundingBox:
    """Project one ellipsoid to its image bounding box.

    Raises ``ProjectionDegenerateError`` when the ellipsoid is not strictly in
    front of the camera, the image conic is not an ellipse, or an inversion is
    ill-conditioned (condition number above 1e12).
    """
    box4, ok, _ = project_ellipsoids(obj.center[None, :], obj.half_lengths[None, :], camera)
    if not ok[0]:
        raise ProjectionDegenerateError(
            "ellipsoid does not project to a finite image ellipse"
        )
    return BoundingBox(center=box4[0, :2], log_extent=box4[0, 2:])


def look_at_camera(
    position: np.ndarray,
    target: np.ndarray,
    focal_px: float,
    image_width: float,
    image_height: float,
    up: np.ndarray = (0.0, 0.0, 1.0),
) -> CameraModel:
    """Build a pinhole camera at ``position`` looking toward ``target``.

    Principal point at the image center, square pixels, +z world up by
    default.  Used by the simulator and tests to construct calibrated rigs.
    """
    position = np.asarray(position, dtype=float)
    target = np.asarray(target, dtype=float)
    up = np.asarray(up, dtype=float)
    fwd = target - position
    norm = np.linalg.norm(fwd)
    if norm < 1e-12:
        raise ValueError("camera target coincides with position")
    fwd = fwd / norm
    right = np.cross(fwd, up)
    rn = np.linalg.norm(right)
    if rn < 1e-12:
        # Looking straight along the up axis: pick any horizontal right vector.
        right = np.cross(fwd, np.array([1.0, 0.0, 0.0]))
        rn = np.linalg.norm(right)
        if rn < 1e-12:
            right = np.cross(fwd, np.array([0.0, 1.0, 0.0]))
            rn = np.linalg.norm(right)
    right = right / rn
    down = np.cross(fwd, right)
    rot = np.stack([right, down, fwd])  # world -> camera
    k = np.array(
        [
            [focal_px, 0.0, image_width / 2.0],
            [0.0, focal_px, image_height / 2.0],
            [0.0, 0.0, 1.0],
        ]
    )
    rt = np.hstack([rot, (-rot @ position)[:, None]])
    return CameraModel(
        proj=k @ rt,
        position=position,
        image_width=image_width,
        image_height=image_height,
    )
