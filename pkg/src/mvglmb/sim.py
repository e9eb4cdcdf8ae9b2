"""Synthetic multi-camera scenario generation.

Ground truth follows the same nearly-constant-velocity dynamics the filter
assumes, with velocity reflection at the room walls and scripted births,
deaths, and standing-to-fallen switches. Detections are synthesized per
camera with occlusion-dependent misdetection, box noise, and Poisson
clutter.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import BoundingBox, CameraModel, look_at_camera, project_ellipsoids
from .models import (
    FALLEN,
    POS_IDX,
    SHAPE_IDX,
    STANDING,
    ClutterModel,
    DetectionModel,
    MeasurementModel,
    MotionModel,
    detection_prob,
    state_ellipsoid,
)


class ConfigError(ValueError):
    """Inconsistent scenario configuration."""


# Standing and fallen log half-length templates (slim tall vs long flat).
STANDING_SHAPE = np.array([-1.2, -1.2, -0.18])
FALLEN_SHAPE = np.array([-0.18, -0.18, -1.2])
STANDING_HEIGHT = 0.825
FALLEN_HEIGHT = 0.413

# Default tracking area (meters): a small indoor room.
DEFAULT_ROOM = (np.zeros(3), np.array([7.67, 3.41, 2.7]))
DEFAULT_ENTRY = np.array([2.03, 0.0, 0.71, 0.0, 0.825, 0.0, -1.2, -1.2, -0.18])


@dataclass(frozen=True)
class MultiSensorFrame:
    """All cameras' detections at one instant; inactive cameras are empty."""

    time: int
    boxes: tuple[tuple[BoundingBox, ...], ...]
    active: tuple[bool, ...]

    def __post_init__(self):
        if len(self.boxes) != len(self.active):
            raise ValueError("boxes/active length mismatch")
        for act, lst in zip(self.active, self.boxes):
            if not act and lst:
                raise ValueError("inactive camera carries detections")

    def total_detections(self) -> int:
        return sum(len(b) for b in self.boxes)


@dataclass(frozen=True)
class ObjectScript:
    """Scripted life of one true object."""

    birth_time: int
    death_time: int  # exclusive; object exists on [birth_time, death_time)
    init_state: np.ndarray
    fall_time: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "init_state", np.asarray(self.init_state, dtype=float))
        if self.death_time <= self.birth_time:
            raise ConfigError("death_time must exceed birth_time")


@dataclass(frozen=True)
class TruthTrack:
    """One true trajectory: full states and modes indexed by time."""

    label: tuple[int, int]
    states: dict[int, np.ndarray]
    modes: dict[int, int]

    def times(self) -> list[int]:
        return sorted(self.states)


@dataclass(frozen=True)
class TruthConfig:
    room: tuple[np.ndarray, np.ndarray]
    motion: MotionModel
    scripts: Sequence[ObjectScript]


@dataclass(frozen=True)
class SensorModels:
    """The per-camera models detection synthesis needs."""

    detection: Sequence[DetectionModel]
    meas: Sequence[MeasurementModel]
    clutter: Sequence[ClutterModel]


@dataclass(frozen=True)
class Scenario:
    room: tuple[np.ndarray, np.ndarray]
    cameras: tuple[CameraModel, ...]
    schedule: dict[int, frozenset[int]]
    truth: tuple[TruthTrack, ...]
    frames: tuple[MultiSensorFrame, ...]
    seed: int


def _noise_sqrt(q: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(0.5 * (q + q.T))
    return vecs @ np.diag(np.sqrt(np.clip(vals, 0.0, None)))


def _reflect(state: np.ndarray, room) -> np.ndarray:
    lo, hi = room
    out = state.copy()
    for dim in range(2):  # reflect on the ground plane only
        p_idx, v_idx = 2 * dim, 2 * dim + 1
        if out[p_idx] < lo[dim]:
            out[p_idx] = 2 * lo[dim] - out[p_idx]
            out[v_idx] = -out[v_idx]
        elif out[p_idx] > hi[dim]:
            out[p_idx] = 2 * hi[dim] - out[p_idx]
            out[v_idx] = -out[v_idx]
    return out


def generate_truth(config: TruthConfig, seed: int) -> list[TruthTrack]:
    """Propagate the scripted objects with the configured dynamics.

    Each object starts at its scripted state, follows the motion model with
    sampled process noise, reflects its ground-plane velocity at the room
    walls, and — when scripted — switches to the fallen shape at its fall
    time. Deterministic given the seed.
    """
    lo, hi = config.room
    rng = np.random.default_rng(seed)
    f, q, drift = config.motion.F, config.motion.Q, config.motion.drift
    sq = _noise_sqrt(q)
    tracks = []
    for idx, script in enumerate(config.scripts):
        p = script.init_state[POS_IDX]
        if np.any(p[:2] < lo[:2]) or np.any(p[:2] > hi[:2]):
            raise ConfigError(f"object {idx} enters outside the room at {p}")
        label = (script.birth_time, idx)
        state = script.init_state.copy()
        mode = STANDING
        states: dict[int, np.ndarray] = {}
        modes: dict[int, int] = {}
        for t in range(script.birth_time, script.death_time):
            if script.fall_time is not None and t == script.fall_time and mode == STANDING:
                mode = FALLEN
                state = state.copy()
                state[SHAPE_IDX] = FALLEN_SHAPE
                state[4] = FALLEN_HEIGHT
                state[5] = 0.0
            states[t] = state.copy()
            modes[t] = mode
            w = sq @ rng.standard_normal(9)
            state = _reflect(f @ state + drift + w, config.room)
        tracks.append(TruthTrack(label=label, states=states, modes=modes))
    return tracks


def _truth_span(truth: Sequence[TruthTrack]) -> tuple[int, int]:
    times = [t for tr in truth for t in tr.states]
    if not times:
        raise ConfigError("truth holds no states")
    return min(times), max(times)


def generate_detections(
    truth: Sequence[TruthTrack],
    cameras: Sequence[CameraModel],
    schedule: dict[int, frozenset[int]],
    models: SensorModels,
    seed: int,
) -> list[MultiSensorFrame]:
    """Synthesize per-camera detection sets for every truth instant.

    Active cameras draw one Bernoulli per alive object with the
    occlusion-aware detection probability, add box noise to the projection
    of each detected object, drop boxes that leave the camera's measurement
    bounds (a miss), and append Poisson clutter uniform over those bounds.
    Detections are shuffled so index carries no identity.
    """
    t0, t1 = _truth_span(truth)
    rng = np.random.default_rng(seed)
    n_cams = len(cameras)
    frames = []
    for t in range(t0, t1 + 1):
        if t not in schedule:
            raise ConfigError(f"schedule does not cover time {t}")
        active_set = schedule[t]
        alive = [tr for tr in truth if t in tr.states]
        ells = [state_ellipsoid(tr.states[t]) for tr in alive]
        all_boxes: list[tuple[BoundingBox, ...]] = []
        active_flags: list[bool] = []
        for c in range(n_cams):
            if c not in active_set:
                all_boxes.append(())
                active_flags.append(False)
                continue
            camera = cameras[c]
            det, meas, clut = models.detection[c], models.meas[c], models.clutter[c]
            boxes: list[BoundingBox] = []
            for i, tr in enumerate(alive):
                others = ells[:i] + ells[i + 1 :]
                pd = detection_prob(det, ells[i], others, camera)
                if rng.random() >= pd:
                    continue
                box4, ok, _ = project_ellipsoids(
                    ells[i].center[None, :], ells[i].half_lengths[None, :], camera
                )
                if not ok[0]:
                    continue
                noise = np.concatenate(
                    [
                        np.sqrt(meas.pos_noise_var),
                        np.sqrt(meas.extent_noise_var),
                    ]
                ) * rng.standard_normal(4)
                z = box4[0] + meas.offset + noise
                if np.any(z < clut.lo) or np.any(z > clut.hi):
                    continue
                boxes.append(BoundingBox(center=z[:2], log_extent=z[2:]))
            n_clutter = rng.poisson(clut.rate)
            for _ in range(int(n_clutter)):
                z = clut.lo + rng.random(4) * (clut.hi - clut.lo)
                boxes.append(BoundingBox(center=z[:2], log_extent=z[2:]))
            order = rng.permutation(len(boxes))
            all_boxes.append(tuple(boxes[k] for k in order))
            active_flags.append(True)
        frames.append(
            MultiSensorFrame(
                time=t, boxes=tuple(all_boxes), active=tuple(active_flags)
            )
        )
    return frames


def apply_schedule(
    frames: Sequence[MultiSensorFrame], schedule: dict[int, frozenset[int]]
) -> list[MultiSensorFrame]:
    """Deactivate cameras per the schedule, emptying their detection lists."""
    out = []
    for frame in frames:
        if frame.time not in schedule:
            raise ConfigError(f"schedule does not cover time {frame.time}")
        active_set = schedule[frame.time]
        boxes = tuple(
            frame.boxes[c] if c in active_set else ()
            for c in range(len(frame.boxes))
        )
        active = tuple(c in active_set for c in range(len(frame.boxes)))
        out.append(MultiSensorFrame(time=frame.time, boxes=boxes, active=active))
    return out


def all_active_schedule(t0: int, t1: int, n_cams: int) -> dict[int, frozenset[int]]:
    full = frozenset(range(n_cams))
    return {t: full for t in range(t0, t1 + 1)}


def default_camera_rig(
    room=DEFAULT_ROOM,
    n_cameras: int = 4,
    height: float = 2.5,
    focal_px: float = 320.0,
    image_width: int = 640,
    image_height: int = 480,
    outset: float = 0.6,
) -> list[CameraModel]:
    """Corner-mounted wide-angle cameras looking at the room center.

    Mounting high and slightly outside the corners keeps the below-frame
    blind zone of each camera to a small patch of its own corner.
    """
    lo, hi = room
    corners = [
        np.array([lo[0] - outset, lo[1] - outset, height]),
        np.array([hi[0] + outset, lo[1] - outset, height]),
        np.array([hi[0] + outset, hi[1] + outset, height]),
        np.array([lo[0] - outset, hi[1] + outset, height]),
    ]
    target = np.array([(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0, 0.9])
    rig = []
    for k in range(n_cameras):
        rig.append(
            look_at_camera(
                position=corners[k % 4],
                target=target,
                focal_px=focal_px,
                image_width=image_width,
                image_height=image_height,
            )
        )
    return rig


def build_scenario(
    room,
    cameras: Sequence[CameraModel],
    scripts: Sequence[ObjectScript],
    motion: MotionModel,
    sensors: SensorModels,
    schedule: dict[int, frozenset[int]] | None,
    seed: int,
) -> Scenario:
    """Generate truth and detections for one reproducible scenario."""
    config = TruthConfig(room=room, motion=motion, scripts=scripts)
    truth = generate_truth(config, seed)
    t0, t1 = _truth_span(truth)
    if schedule is None:
        schedule = all_active_schedule(t0, t1, len(cameras))
    frames = generate_detections(truth, cameras, schedule, sensors, seed + 1)
    return Scenario(
        room=(np.asarray(room[0], dtype=float), np.asarray(room[1], dtype=float)),
        cameras=tuple(cameras),
        schedule=dict(schedule),
        truth=tuple(truth),
        frames=tuple(frames),
        seed=seed,
    )
