"""Single-object stochastic models: motion, survival, detection with occlusion,
measurement likelihood, clutter, births, and the standing/fallen mode extension.

State vectors are 9-dimensional, ordered (px, vx, py, vy, pz, vz, s1, s2, s3)
where s_i are log half-lengths of the object ellipsoid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .geometry import (
    BoundingBox,
    CameraModel,
    Ellipsoid,
    ProjectionDegenerateError,
    project_ellipsoids,
    shadow_indicator,
)

POS_IDX = np.array([0, 2, 4])
VEL_IDX = np.array([1, 3, 5])
SHAPE_IDX = np.array([6, 7, 8])

STANDING, FALLEN = 0, 1


def state_position(state: np.ndarray) -> np.ndarray:
    return np.asarray(state)[..., POS_IDX]


def state_ellipsoid(state: np.ndarray) -> Ellipsoid:
    state = np.asarray(state, dtype=float)
    return Ellipsoid(center=state[POS_IDX], half_lengths=np.exp(state[SHAPE_IDX]))


def _cv_blocks(dt: float, pos_noise: np.ndarray, shape_noise: np.ndarray):
    f_pv = np.array([[1.0, dt], [0.0, 1.0]])
    f = np.zeros((9, 9))
    for i in range(3):
        f[2 * i : 2 * i + 2, 2 * i : 2 * i + 2] = f_pv
    f[6:, 6:] = np.eye(3)
    q_pv = np.array([[dt**4 / 4.0, dt**3 / 2.0], [dt**3 / 2.0, dt**2]])
    q = np.zeros((9, 9))
    for i in range(3):
        q[2 * i : 2 * i + 2, 2 * i : 2 * i + 2] = pos_noise[i] * q_pv
    q[6:, 6:] = np.diag(shape_noise)
    drift = np.zeros(9)
    drift[6:] = -shape_noise / 2.0
    return f, q, drift


@dataclass(frozen=True)
class MotionModel:
    """Nearly-constant-velocity motion with log-shape random walk.

    The drift keeps the exponentiated shape components unit-mean under the
    log-normal noise (expected scaling factor 1).
    """

    dt: float
    pos_noise: np.ndarray
    shape_noise: np.ndarray
    F: np.ndarray = field(init=False)
    Q: np.ndarray = field(init=False)
    drift: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "pos_noise", np.asarray(self.pos_noise, dtype=float))
        object.__setattr__(self, "shape_noise", np.asarray(self.shape_noise, dtype=float))
        f, q, drift = _cv_blocks(self.dt, self.pos_noise, self.shape_noise)
        object.__setattr__(self, "F", f)
        object.__setattr__(self, "Q", q)
        object.__setattr__(self, "drift", drift)


def transition_moments(model: MotionModel) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (F, drift, Q) of the linear-Gaussian transition."""
    return model.F, model.drift, model.Q


def rect_scene_mask(
    xy_min: Sequence[float], xy_max: Sequence[float], margin: float = 0.3
) -> Callable[[np.ndarray], float]:
    """Ground-plane rectangular scene mask with a linear border ramp.

    Returns b(x) = 1 in the interior at least ``margin`` from the boundary,
    falling linearly to 0 at the boundary, 0 outside.
    """
    lo = np.asarray(xy_min, dtype=float)
    hi = np.asarray(xy_max, dtype=float)

    def mask(pos: np.ndarray) -> float:
        p = np.asarray(pos, dtype=float)[:2]
        inside = np.minimum(p - lo, hi - p)
        dist = float(np.min(inside))
        if dist <= 0.0:
            return 0.0
        if margin <= 0.0:
            return 1.0
        return float(min(dist / margin, 1.0))

    return mask


@dataclass(frozen=True)
class SurvivalModel:
    """Survival probability: scene mask times a track-age sigmoid."""

    tau: float
    scene_mask: Callable[[np.ndarray], float]


def survival_prob(
    model: SurvivalModel, state: np.ndarray, label_birth_time: int, now: int
) -> float:
    age = now - label_birth_time
    b = model.scene_mask(state_position(state))
    return b / (1.0 + math.exp(-model.tau * age))


@dataclass(frozen=True)
class DetectionModel:
    """Detection probability with the two-valued occlusion scaling."""

    base_pd: float
    beta: float


def detection_prob(
    model: DetectionModel,
    target: Ellipsoid,
    others: Sequence[Ellipsoid],
    camera: CameraModel,
) -> float:
    """Effective detection probability of ``target`` given occluders ``others``.

    Returns exactly ``base_pd`` when no other object shadows the target's
    center from the camera, and exactly ``beta * base_pd`` otherwise.
    """
    m = 1.0
    for other in others:
        if shadow_indicator(target.center, other, camera):
            m = 0.0
            break
    return model.base_pd * (m + model.beta * (1.0 - m))


@dataclass(frozen=True)
class MeasurementModel:
    """Gaussian box-measurement noise: pixel variances and log-extent variances."""

    pos_noise_var: np.ndarray
    extent_noise_var: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pos_noise_var", np.asarray(self.pos_noise_var, dtype=float))
        object.__setattr__(self, "extent_noise_var", np.asarray(self.extent_noise_var, dtype=float))
        if np.any(self.pos_noise_var <= 0) or np.any(self.extent_noise_var <= 0):
            raise ValueError("measurement variances must be positive")

    @property
    def offset(self) -> np.ndarray:
        """Mean offset (0, 0, -var_e/2) keeping exponentiated extents unit-mean."""
        return np.concatenate([np.zeros(2), -self.extent_noise_var / 2.0])

    @property
    def cov(self) -> np.ndarray:
        return np.diag(np.concatenate([self.pos_noise_var, self.extent_noise_var]))


def _diag_gauss_logpdf(x: np.ndarray, mean: np.ndarray, var: np.ndarray) -> float:
    d = x - mean
    return float(-0.5 * np.sum(d * d / var) - 0.5 * np.sum(np.log(2.0 * np.pi * var)))


def measurement_loglik(
    model: MeasurementModel, state: np.ndarray, z: BoundingBox, camera: CameraModel
) -> float:
    """Log-likelihood of box ``z`` given a 9-vector state (direct evaluation)."""
    state = np.asarray(state, dtype=float)
    box4, ok, _ = project_ellipsoids(
        state[POS_IDX][None, :], np.exp(state[SHAPE_IDX])[None, :], camera
    )
    if not ok[0]:
        return -np.inf
    var = np.concatenate([model.pos_noise_var, model.extent_noise_var])
    return _diag_gauss_logpdf(z.as_vector(), box4[0] + model.offset, var)


@dataclass(frozen=True)
class ClutterModel:
    """Poisson false alarms, uniform over a measurement-space box."""

    rate: float
    lo: np.ndarray  # (cx, cy, log_w, log_h) lower bounds
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float))
        if self.rate <= 0:
            raise ValueError("clutter rate must be positive")
        if np.any(self.hi <= self.lo):
            raise ValueError("clutter bounds must be non-degenerate")

    @property
    def log_volume(self) -> float:
        return float(np.sum(np.log(self.hi - self.lo)))


def default_clutter_bounds(camera: CameraModel) -> tuple[np.ndarray, np.ndarray]:
    """Pixel rectangle = image bounds; log-extent rectangle [log 4, log dim]."""
    lo = np.array([0.0, 0.0, math.log(4.0), math.log(4.0)])
    hi = np.array(
        [
            camera.image_width,
            camera.image_height,
            math.log(camera.image_width),
            math.log(camera.image_height),
        ]
    )
    return lo, hi


def clutter_log_intensity(model: ClutterModel, z: BoundingBox) -> float:
    v = z.as_vector()
    if np.any(v < model.lo) or np.any(v > model.hi):
        return -np.inf
    return math.log(model.rate) - model.log_volume


@dataclass(frozen=True)
class BirthEntry:
    """One potential new object: its label, probability, density, mode prior."""

    label: tuple[int, int]
    prob: float
    mean: np.ndarray
    cov: np.ndarray
    mode_weights: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "cov", np.asarray(self.cov, dtype=float))
        if not 0.0 <= self.prob <= 1.0:
            raise ValueError("birth probability must be in [0, 1]")


@dataclass
class BirthModel:
    entries: list[BirthEntry]
    adaptive: bool = False


def birth_model_at(birth: BirthModel, time: int) -> BirthModel:
    """Re-stamp the entries' labels as (time, entry index) for one filter step."""
    entries = [
        BirthEntry(
            label=(time, i),
            prob=e.prob,
            mean=e.mean,
            cov=e.cov,
            mode_weights=e.mode_weights,
        )
        for i, e in enumerate(birth.entries)
    ]
    return BirthModel(entries=entries, adaptive=birth.adaptive)


@dataclass(frozen=True)
class ModeModel:
    """Standing/fallen jump-Markov extension.

    ``per_mode_shape_noise[m]`` is the shape noise of an m -> m transition;
    mode switches use the dedicated switch noises.
    """

    transition: np.ndarray
    per_mode_extent_var: np.ndarray  # (2, 2): rows standing/fallen
    per_mode_shape_noise: np.ndarray  # (2, 3)
    switch_pos_noise: np.ndarray
    switch_shape_noise: np.ndarray
    rho: float
    birth_mode_weights: np.ndarray

    def __post_init__(self):
        for name in (
            "transition",
            "per_mode_extent_var",
            "per_mode_shape_noise",
            "switch_pos_noise",
            "switch_shape_noise",
            "birth_mode_weights",
        ):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if not np.allclose(self.transition.sum(axis=1), 1.0):
            raise ValueError("mode transition rows must sum to 1")


def default_mode_model(
    base_extent_var: Sequence[float] = (0.01, 0.0025),
    base_shape_noise: Sequence[float] = (0.0036, 0.0036, 0.0004),
) -> ModeModel:
    """Standing/fallen model with the standard indoor-person parameters."""
    ev = np.asarray(base_extent_var, dtype=float)
    return ModeModel(
        transition=np.array([[0.6, 0.4], [0.6, 0.4]]),
        per_mode_extent_var=np.stack([ev, ev[::-1]]),
        per_mode_shape_noise=np.stack(
            [np.asarray(base_shape_noise, dtype=float), np.array([0.15, 0.15, 0.04])]
        ),
        switch_pos_noise=np.array([0.0049, 0.0049, 0.0049]),
        switch_shape_noise=np.array([0.01, 0.01, 0.01]),
        rho=2.0,
        birth_mode_weights=np.array([0.9, 0.1]),
    )


def jms_transition_moments(
    motion: MotionModel, mode_model: ModeModel, m_from: int, m_to: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(F, drift, Q) of the transition conditioned on the mode pair."""
    if m_from == m_to:
        pos = motion.pos_noise
        shape = mode_model.per_mode_shape_noise[m_from]
    else:
        pos = mode_model.switch_pos_noise
        shape = mode_model.switch_shape_noise
    f, q, drift = _cv_blocks(motion.dt, np.asarray(pos), np.asarray(shape))
    return f, drift, q


def log_aspect_factor(log_extent: np.ndarray, mode: int, rho: float) -> float:
    """Log of the mode-dependent aspect-ratio factor (unnormalized).

    The ratio is height/width on physical extents; standing favors ratios
    above 1, fallen below 1.
    """
    ratio = math.exp(float(log_extent[1]) - float(log_extent[0]))
    sign = 1.0 if mode == STANDING else -1.0
    return sign * rho * (ratio - 1.0)


def mode_aware_loglik(
    mode_model: ModeModel,
    meas: MeasurementModel,
    state: np.ndarray,
    mode: int,
    z: BoundingBox,
    camera: CameraModel,
) -> float:
    """Mode-conditional box log-likelihood (unnormalized by the aspect factor)."""
    mode_meas = MeasurementModel(
        pos_noise_var=meas.pos_noise_var,
        extent_noise_var=mode_model.per_mode_extent_var[mode],
    )
    base = measurement_loglik(mode_meas, state, z, camera)
    if base == -np.inf:
        return -np.inf
    return base + log_aspect_factor(z.log_extent, mode, mode_model.rho)
