"""Scenario-generator tests: scripted truth dynamics, detection synthesis
statistics, camera schedules, and reproducibility."""

from __future__ import annotations

import math

import numpy as np
import pytest

from conftest import person_state, standard_motion
from mvglmb.geometry import BoundingBox, project_ellipsoids
from mvglmb.models import (
    FALLEN,
    POS_IDX,
    SHAPE_IDX,
    STANDING,
    ClutterModel,
    DetectionModel,
    MeasurementModel,
    MotionModel,
    default_clutter_bounds,
    detection_prob,
    state_ellipsoid,
)
from mvglmb.sim import (
    DEFAULT_ROOM,
    FALLEN_HEIGHT,
    FALLEN_SHAPE,
    STANDING_HEIGHT,
    STANDING_SHAPE,
    ConfigError,
    MultiSensorFrame,
    ObjectScript,
    SensorModels,
    TruthConfig,
    all_active_schedule,
    apply_schedule,
    build_scenario,
    default_camera_rig,
    generate_detections,
    generate_truth,
)

TINY_VAR = 1e-12


def zero_noise_motion(dt=0.25):
    return MotionModel(dt=dt, pos_noise=np.zeros(3), shape_noise=np.zeros(3))


def scripts_from_positions(positions, birth=0, death=10):
    return [
        ObjectScript(birth_time=birth, death_time=death, init_state=person_state(x, y))
        for x, y in positions
    ]


def quiet_sensors(cameras, base_pd=0.9, beta=0.1, rate=1e-12, pos_var=TINY_VAR, ext_var=TINY_VAR):
    n = len(cameras)
    bounds = [default_clutter_bounds(c) for c in cameras]
    return SensorModels(
        detection=[DetectionModel(base_pd=base_pd, beta=beta)] * n,
        meas=[
            MeasurementModel(
                pos_noise_var=np.full(2, pos_var), extent_noise_var=np.full(2, ext_var)
            )
        ]
        * n,
        clutter=[ClutterModel(rate=rate, lo=lo, hi=hi) for lo, hi in bounds],
    )


def frame_signature(frame):
    return (
        frame.time,
        frame.active,
        tuple(
            tuple(tuple(b.as_vector().tolist()) for b in cam_boxes)
            for cam_boxes in frame.boxes
        ),
    )


class TestTruth:
    def test_straight_line_advances_exactly(self):
        script = ObjectScript(
            birth_time=0, death_time=11, init_state=person_state(2.0, 1.5, vx=1.0)
        )
        config = TruthConfig(room=DEFAULT_ROOM, motion=zero_noise_motion(0.25), scripts=[script])
        (track,) = generate_truth(config, seed=0)
        assert track.label == (0, 0)
        assert track.times() == list(range(11))
        for t in range(11):
            s = track.states[t]
            assert s[0] == pytest.approx(2.0 + 0.25 * t, abs=1e-12)
            assert s[1] == pytest.approx(1.0, abs=1e-12)
            assert s[2] == pytest.approx(1.5, abs=1e-12)
            assert s[4] == pytest.approx(STANDING_HEIGHT, abs=1e-12)
            np.testing.assert_allclose(s[SHAPE_IDX], STANDING_SHAPE, atol=1e-12)
        moved = track.states[10][POS_IDX] - track.states[0][POS_IDX]
        np.testing.assert_allclose(moved, [2.5, 0.0, 0.0], atol=1e-12)

    def test_wall_reflection_flips_velocity(self):
        script = ObjectScript(
            birth_time=0, death_time=3, init_state=person_state(7.5, 1.5, vx=1.0)
        )
        config = TruthConfig(room=DEFAULT_ROOM, motion=zero_noise_motion(0.25), scripts=[script])
        (track,) = generate_truth(config, seed=0)
        hi_x = DEFAULT_ROOM[1][0]
        assert track.states[1][0] == pytest.approx(2.0 * hi_x - 7.75, abs=1e-12)
        assert track.states[1][1] == pytest.approx(-1.0, abs=1e-12)
        assert track.states[2][0] == pytest.approx(2.0 * hi_x - 7.75 - 0.25, abs=1e-12)

    def test_fall_switches_shape_and_height(self):
        script = ObjectScript(
            birth_time=0, death_time=30, init_state=person_state(3.0, 1.5), fall_time=20
        )
        config = TruthConfig(room=DEFAULT_ROOM, motion=zero_noise_motion(1.0), scripts=[script])
        (track,) = generate_truth(config, seed=0)
        assert track.modes[19] == STANDING
        assert track.modes[20] == FALLEN
        np.testing.assert_allclose(track.states[19][SHAPE_IDX], STANDING_SHAPE, atol=1e-12)
        np.testing.assert_allclose(track.states[20][SHAPE_IDX], FALLEN_SHAPE, atol=1e-12)
        assert track.states[20][4] == pytest.approx(FALLEN_HEIGHT, abs=1e-12)
        assert track.states[20][5] == 0.0
        # The switch is permanent with zero process noise.
        np.testing.assert_allclose(track.states[29][SHAPE_IDX], FALLEN_SHAPE, atol=1e-12)
        assert all(track.modes[t] == FALLEN for t in range(20, 30))

    def test_entry_outside_room_rejected(self):
        script = ObjectScript(birth_time=0, death_time=5, init_state=person_state(-1.0, 1.0))
        config = TruthConfig(room=DEFAULT_ROOM, motion=zero_noise_motion(), scripts=[script])
        with pytest.raises(ConfigError):
            generate_truth(config, seed=0)

    def test_death_not_after_birth_rejected(self):
        with pytest.raises(ConfigError):
            ObjectScript(birth_time=5, death_time=5, init_state=person_state(1.0, 1.0))

    def test_noisy_truth_is_deterministic_and_seeded(self):
        scripts = scripts_from_positions([(2.0, 1.0), (5.0, 2.0)], death=25)
        config = TruthConfig(room=DEFAULT_ROOM, motion=standard_motion(0.25), scripts=scripts)
        a = generate_truth(config, seed=7)
        b = generate_truth(config, seed=7)
        c = generate_truth(config, seed=8)
        for ta, tb in zip(a, b):
            assert ta.times() == tb.times()
            for t in ta.times():
                np.testing.assert_array_equal(ta.states[t], tb.states[t])
        assert any(
            not np.array_equal(ta.states[t], tc.states[t])
            for ta, tc in zip(a, c)
            for t in ta.times()
        )

    def test_reflection_keeps_ground_position_in_room(self):
        scripts = [
            ObjectScript(
                birth_time=0, death_time=200, init_state=person_state(7.0, 3.0, vx=0.8, vy=0.5)
            )
        ]
        config = TruthConfig(room=DEFAULT_ROOM, motion=standard_motion(0.25), scripts=scripts)
        (track,) = generate_truth(config, seed=3)
        lo, hi = DEFAULT_ROOM
        for t in track.times():
            assert lo[0] <= track.states[t][0] <= hi[0]
            assert lo[1] <= track.states[t][2] <= hi[1]


class TestDetections:
    def test_perfect_detection_no_clutter_is_one_box_per_object(self):
        rig = default_camera_rig()
        scripts = scripts_from_positions([(3.0, 1.5), (4.5, 2.0)], death=5)
        sensors = quiet_sensors(rig, base_pd=1.0, beta=1.0)
        scenario = build_scenario(
            DEFAULT_ROOM, rig, scripts, zero_noise_motion(), sensors, None, seed=0
        )
        assert len(scenario.frames) == 5
        for frame in scenario.frames:
            assert frame.active == (True, True, True, True)
            assert all(len(cam_boxes) == 2 for cam_boxes in frame.boxes)
            assert frame.total_detections() == 8

    def test_detection_rate_matches_binomial(self):
        rig = default_camera_rig()
        scripts = scripts_from_positions([(3.835, 1.705)], death=400)
        sensors = quiet_sensors(rig, base_pd=0.9, beta=0.1)
        scenario = build_scenario(
            DEFAULT_ROOM, rig, scripts, zero_noise_motion(), sensors, None, seed=2
        )
        n = 400 * 4
        total = sum(f.total_detections() for f in scenario.frames)
        sigma = math.sqrt(0.9 * 0.1 / n)
        assert abs(total / n - 0.9) <= 3.0 * sigma

    def test_clutter_count_matches_poisson(self):
        rig = default_camera_rig(n_cameras=1)
        scripts = scripts_from_positions([(3.0, 1.5)], death=250)
        sensors = quiet_sensors(rig, base_pd=1e-12, rate=10.0)
        scenario = build_scenario(
            DEFAULT_ROOM, rig, scripts, zero_noise_motion(), sensors, None, seed=4
        )
        total = sum(f.total_detections() for f in scenario.frames)
        mean = 250 * 10.0
        assert abs(total - mean) <= 3.0 * math.sqrt(mean)

    def test_box_noise_centers_on_projection(self):
        rig = default_camera_rig()
        scripts = scripts_from_positions([(3.835, 1.705)], death=400)
        sensors = quiet_sensors(
            rig, base_pd=1.0, beta=1.0, pos_var=400.0, ext_var=0.01
        )
        scenario = build_scenario(
            DEFAULT_ROOM, rig, scripts, zero_noise_motion(), sensors, None, seed=6
        )
        ell = state_ellipsoid(scenario.truth[0].states[0])
        box4, ok, _ = project_ellipsoids(
            ell.center[None, :], ell.half_lengths[None, :], rig[0]
        )
        assert ok[0]
        expected = box4[0] + sensors.meas[0].offset
        zs = np.array(
            [b.as_vector() for f in scenario.frames for b in f.boxes[0]]
        )
        assert len(zs) > 350
        se = np.sqrt(np.array([400.0, 400.0, 0.01, 0.01]) / len(zs))
        np.testing.assert_array_less(np.abs(zs.mean(axis=0) - expected), 4.0 * se)

    def test_missing_schedule_time_rejected(self):
        rig = default_camera_rig(n_cameras=2)
        scripts = scripts_from_positions([(3.0, 1.5)], death=4)
        truth = generate_truth(
            TruthConfig(room=DEFAULT_ROOM, motion=zero_noise_motion(), scripts=scripts), seed=0
        )
        schedule = {t: frozenset({0, 1}) for t in range(3)}  # misses t=3
        with pytest.raises(ConfigError):
            generate_detections(truth, rig, schedule, quiet_sensors(rig), seed=0)

    def test_scenario_is_byte_identical_across_reruns(self):
        rig = default_camera_rig()
        scripts = scripts_from_positions([(2.5, 1.0), (5.0, 2.2)], death=12)
        sensors = quiet_sensors(rig, rate=1.5, pos_var=25.0, ext_var=0.01)
        a = build_scenario(
            DEFAULT_ROOM, rig, scripts, standard_motion(0.25), sensors, None, seed=11
        )
        b = build_scenario(
            DEFAULT_ROOM, rig, scripts, standard_motion(0.25), sensors, None, seed=11
        )
        c = build_scenario(
            DEFAULT_ROOM, rig, scripts, standard_motion(0.25), sensors, None, seed=12
        )
        assert [frame_signature(f) for f in a.frames] == [frame_signature(f) for f in b.frames]
        for ta, tb in zip(a.truth, b.truth):
            for t in ta.times():
                np.testing.assert_array_equal(ta.states[t], tb.states[t])
        assert [frame_signature(f) for f in a.frames] != [frame_signature(f) for f in c.frames]


def cluster_positions(rig):
    """A 15-person scene with one target boxed in along every sight line.

    The first position is the room center; the next four sit 0.7 m from it
    toward each camera, inside every camera->center segment; the rest stand
    along the walls, clear of the diagonals.
    """
    lo, hi = DEFAULT_ROOM
    center = np.array([(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0])
    occluders = []
    for cam in rig:
        d = cam.position[:2] - center
        occluders.append(tuple(center + 0.7 * d / np.linalg.norm(d)))
    bystanders = [
        (0.8, 0.5), (2.3, 0.4), (5.4, 0.4), (6.9, 0.5),
        (0.8, 2.9), (2.3, 3.0), (5.4, 3.0), (6.9, 2.9),
        (1.0, 1.7), (6.7, 1.7),
    ]
    return [tuple(center)] + occluders + bystanders


def spread_positions():
    xs = np.linspace(1.7, 6.0, 5)
    ys = [0.8, 1.7, 2.6]
    return [(float(x), float(y)) for x in xs for y in ys]


class TestOcclusion:
    def test_crowd_can_hide_one_object_from_every_camera(self):
        rig = default_camera_rig()
        positions = cluster_positions(rig)
        assert len(positions) == 15
        truth = generate_truth(
            TruthConfig(
                room=DEFAULT_ROOM,
                motion=zero_noise_motion(),
                scripts=scripts_from_positions(positions),
            ),
            seed=0,
        )
        det = DetectionModel(base_pd=0.9, beta=0.1)
        for t in (0, 9):
            ells = [state_ellipsoid(tr.states[t]) for tr in truth]
            for cam in rig:
                pd = detection_prob(det, ells[0], ells[1:], cam)
                assert pd == 0.9 * 0.1
            # A wall-side bystander still has an open view somewhere.
            others = ells[:6] + ells[7:]
            open_views = sum(
                detection_prob(det, ells[6], others, cam) == 0.9 for cam in rig
            )
            assert open_views >= 1

    def test_beta_one_makes_detection_counts_geometry_free(self):
        rig = default_camera_rig()
        motion = zero_noise_motion()
        counts = {}
        for name, positions in (
            ("cluster", cluster_positions(rig)),
            ("spread", spread_positions()),
        ):
            truth = generate_truth(
                TruthConfig(
                    room=DEFAULT_ROOM, motion=motion,
                    scripts=scripts_from_positions(positions),
                ),
                seed=0,
            )
            frames = generate_detections(
                truth, rig, all_active_schedule(0, 9, 4),
                quiet_sensors(rig, base_pd=0.9, beta=1.0), seed=5,
            )
            counts[name] = [[len(cb) for cb in f.boxes] for f in frames]
        assert counts["cluster"] == counts["spread"]

    def test_small_beta_cuts_counts_and_reintroduces_geometry(self):
        rig = default_camera_rig()
        motion = zero_noise_motion()
        totals = {}
        for name, positions in (
            ("cluster", cluster_positions(rig)),
            ("spread", spread_positions()),
        ):
            truth = generate_truth(
                TruthConfig(
                    room=DEFAULT_ROOM, motion=motion,
                    scripts=scripts_from_positions(positions),
                ),
                seed=0,
            )
            for beta in (1.0, 0.1):
                frames = generate_detections(
                    truth, rig, all_active_schedule(0, 9, 4),
                    quiet_sensors(rig, base_pd=0.9, beta=beta), seed=5,
                )
                totals[name, beta] = sum(f.total_detections() for f in frames)
        # Shadowing only ever removes detections, and by different amounts
        # in the two room layouts.
        assert totals["cluster", 0.1] < totals["cluster", 1.0]
        assert totals["spread", 0.1] < totals["spread", 1.0]
        assert totals["cluster", 0.1] != totals["spread", 0.1]


class TestSchedule:
    def make_scenario(self, death=20):
        rig = default_camera_rig()
        scripts = scripts_from_positions([(3.0, 1.5), (4.5, 2.0)], death=death)
        return build_scenario(
            DEFAULT_ROOM, rig, scripts, zero_noise_motion(),
            quiet_sensors(rig, rate=1.0, pos_var=25.0, ext_var=0.01), None, seed=9
        )

    def test_all_active_identity(self):
        scenario = self.make_scenario()
        out = apply_schedule(scenario.frames, all_active_schedule(0, 19, 4))
        assert [frame_signature(f) for f in out] == [
            frame_signature(f) for f in scenario.frames
        ]

    def test_deactivation_empties_own_boxes_only(self):
        scenario = self.make_scenario()
        schedule = {t: frozenset({0, 2, 3}) for t in range(20)}
        out = apply_schedule(scenario.frames, schedule)
        for before, after in zip(scenario.frames, out):
            assert after.active == (True, False, True, True)
            assert after.boxes[1] == ()
            for c in (0, 2, 3):
                assert after.boxes[c] == before.boxes[c]

    def test_four_phase_reconfiguration(self):
        scenario = self.make_scenario()
        phases = {}
        phases.update({t: frozenset({0, 1, 2, 3}) for t in range(0, 5)})
        phases.update({t: frozenset({0, 1, 2}) for t in range(5, 10)})
        phases.update({t: frozenset({0, 1}) for t in range(10, 15)})
        phases.update({t: frozenset({2, 3}) for t in range(15, 20)})
        out = apply_schedule(scenario.frames, phases)
        for frame in out:
            want = phases[frame.time]
            assert frame.active == tuple(c in want for c in range(4))
            for c in range(4):
                if c not in want:
                    assert frame.boxes[c] == ()

    def test_uncovered_time_rejected(self):
        scenario = self.make_scenario()
        schedule = {t: frozenset({0, 1, 2, 3}) for t in range(19)}  # misses t=19
        with pytest.raises(ConfigError):
            apply_schedule(scenario.frames, schedule)

    def test_all_active_schedule_covers_inclusive_span(self):
        sched = all_active_schedule(3, 7, 2)
        assert sorted(sched) == [3, 4, 5, 6, 7]
        assert all(v == frozenset({0, 1}) for v in sched.values())


class TestFrameValidation:
    def test_inactive_camera_with_boxes_rejected(self):
        b = BoundingBox(center=np.array([1.0, 2.0]), log_extent=np.array([0.5, 0.5]))
        with pytest.raises(ValueError):
            MultiSensorFrame(time=0, boxes=((b,),), active=(False,))

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            MultiSensorFrame(time=0, boxes=((),), active=(True, False))
