"""Shared builders for the test suite: cameras, model bundles, small priors."""

from __future__ import annotations

import numpy as np

from mvglmb import glmb, models, sim
from mvglmb.gaussian import Gaussian
from mvglmb.geometry import CameraModel
from mvglmb.models import (
    BirthEntry,
    BirthModel,
    ClutterModel,
    DetectionModel,
    MeasurementModel,
    MotionModel,
    SurvivalModel,
    default_clutter_bounds,
)

ROOM = sim.DEFAULT_ROOM


def unit_camera(focal: float = 1.0, size: float = 2.0) -> CameraModel:
    """Axis-aligned camera at the origin looking along +z, principal point 0."""
    proj = np.array(
        [
            [focal, 0.0, 0.0, 0.0],
            [0.0, focal, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
        ]
    )
    return CameraModel(
        proj=proj, position=np.zeros(3), image_width=size, image_height=size
    )


def centered_camera(
    focal: float = 300.0, width: float = 640.0, height: float = 480.0
) -> CameraModel:
    """Camera at the origin looking along +z with the principal point centered."""
    proj = np.array(
        [
            [focal, 0.0, width / 2.0, 0.0],
            [0.0, focal, height / 2.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
        ]
    )
    return CameraModel(
        proj=proj, position=np.zeros(3), image_width=width, image_height=height
    )


def standard_motion(dt: float = 1.0) -> MotionModel:
    return MotionModel(
        dt=dt,
        pos_noise=np.array([0.0016, 0.0016, 0.0016]),
        shape_noise=np.array([0.0036, 0.0036, 0.0004]),
    )


def constant_mask(_pos: np.ndarray) -> float:
    return 1.0


def person_state(x: float, y: float, vx: float = 0.0, vy: float = 0.0) -> np.ndarray:
    """Standing-person 9-vector at ground position (x, y)."""
    state = np.zeros(9)
    state[0], state[1] = x, vx
    state[2], state[3] = y, vy
    state[4] = sim.STANDING_HEIGHT
    state[6:] = sim.STANDING_SHAPE
    return state


def filter_models(
    cameras,
    base_pd: float = 0.9,
    beta: float = 0.1,
    clutter_rate: float = 2.0,
    birth_entries=(),
    mode=None,
    dt: float = 1.0,
    adaptive: bool = False,
) -> glmb.FilterModels:
    """A complete model bundle over the given rig with documented defaults."""
    detection = [DetectionModel(base_pd=base_pd, beta=beta) for _ in cameras]
    meas = [
        MeasurementModel(
            pos_noise_var=np.array([400.0, 400.0]),
            extent_noise_var=np.array([0.01, 0.0025]),
        )
        for _ in cameras
    ]
    clutter = []
    for cam in cameras:
        lo, hi = default_clutter_bounds(cam)
        clutter.append(ClutterModel(rate=clutter_rate, lo=lo, hi=hi))
    return glmb.FilterModels(
        motion=standard_motion(dt=dt),
        survival=SurvivalModel(tau=0.5, scene_mask=constant_mask),
        detection=detection,
        meas=meas,
        clutter=clutter,
        cameras=list(cameras),
        birth=BirthModel(entries=list(birth_entries), adaptive=adaptive),
        mode=mode,
    )


def birth_entry(
    label: tuple[int, int],
    mean: np.ndarray,
    prob: float = 0.05,
    pos_std: float = 0.5,
    mode_weights=None,
) -> BirthEntry:
    cov = np.diag(
        np.array([pos_std**2, 0.1**2] * 3 + [0.05**2] * 3)
    )
    return BirthEntry(
        label=label, prob=prob, mean=mean, cov=cov, mode_weights=mode_weights
    )


def prior_with_tracks(
    time: int,
    states,
    pos_std: float = 0.05,
    vel_std: float = 0.02,
    shape_std: float = 0.02,
    birth_offset: int = 5,
) -> glmb.GlmbDensity:
    """Single-component prior holding one Gaussian per given 9-vector state."""
    var = np.array([pos_std**2, vel_std**2] * 3 + [shape_std**2] * 3)
    labels = []
    densities = {}
    for i, state in enumerate(states):
        lab = glmb.Label(time - birth_offset, i)
        labels.append(lab)
        densities[lab] = glmb.TrackDensity(
            gaussian=Gaussian(mean=np.asarray(state, dtype=float), cov=np.diag(var))
        )
    comp = glmb.GlmbComponent(
        labels=tuple(labels), history_id="", log_weight=0.0, densities=densities
    )
    return glmb.GlmbDensity(components=(comp,), time=time)


def small_instance(seed: int):
    """Random 1-2 object, 2-camera, <=2-detections-per-camera instance.

    Small enough for exhaustive association enumeration; detections are
    jittered projections of the true states plus occasional clutter, all kept
    inside the clutter support.
    """
    rng = np.random.default_rng(seed)
    cams = sim.default_camera_rig(n_cameras=2)
    n_obj = int(rng.integers(1, 3))
    states = []
    for _ in range(n_obj):
        states.append(
            person_state(
                rng.uniform(1.5, 6.0),
                rng.uniform(0.8, 2.6),
                vx=rng.uniform(-0.2, 0.2),
                vy=rng.uniform(-0.2, 0.2),
            )
        )
    prior = prior_with_tracks(4, states)
    entries = [
        birth_entry(
            (0, 0),
            person_state(rng.uniform(2.0, 5.5), rng.uniform(1.0, 2.4)),
            prob=0.02,
        )
    ]
    bundle = filter_models(cams, clutter_rate=2.0, birth_entries=entries)

    from mvglmb.geometry import BoundingBox
    from mvglmb.models import POS_IDX, SHAPE_IDX

    jitter = np.array([6.0, 6.0, 0.04, 0.04])
    boxes_per_cam = []
    for cam, clut in zip(cams, bundle.clutter):
        cam_boxes = []
        for state in states:
            if len(cam_boxes) >= 2 or rng.random() < 0.25:
                continue
            box4, ok, _ = models.project_ellipsoids(
                state[POS_IDX][None, :], np.exp(state[SHAPE_IDX])[None, :], cam
            )
            if not ok[0]:
                continue
            z = box4[0] + jitter * rng.standard_normal(4)
            if np.any(z < clut.lo) or np.any(z > clut.hi):
                continue
            cam_boxes.append(BoundingBox(center=z[:2], log_extent=z[2:]))
        if len(cam_boxes) < 2 and rng.random() < 0.35:
            z = clut.lo + rng.random(4) * (clut.hi - clut.lo)
            cam_boxes.append(BoundingBox(center=z[:2], log_extent=z[2:]))
        boxes_per_cam.append(tuple(cam_boxes))
    frame = sim.MultiSensorFrame(
        time=5, boxes=tuple(boxes_per_cam), active=(True, True)
    )
    return prior, frame, bundle


EXHAUSTIVE_BUDGET = glmb.TruncationBudget(
    max_components=10**6, max_samples=1, exhaustive=True
)


def detections_from_states(states, cameras, jitter=0.0, rng=None):
    """One frame whose boxes are the exact (optionally jittered) projections."""
    from mvglmb.geometry import BoundingBox
    from mvglmb.models import POS_IDX, SHAPE_IDX

    boxes_per_cam = []
    for cam in cameras:
        cam_boxes = []
        for state in states:
            state = np.asarray(state, dtype=float)
            box4, ok, _ = models.project_ellipsoids(
                state[POS_IDX][None, :], np.exp(state[SHAPE_IDX])[None, :], cam
            )
            if ok[0]:
                z = box4[0].copy()
                if jitter and rng is not None:
                    z = z + jitter * rng.standard_normal(4)
                cam_boxes.append(BoundingBox(center=z[:2], log_extent=z[2:]))
        boxes_per_cam.append(tuple(cam_boxes))
    return sim.MultiSensorFrame(
        time=0, boxes=tuple(boxes_per_cam), active=tuple(True for _ in cameras)
    )
