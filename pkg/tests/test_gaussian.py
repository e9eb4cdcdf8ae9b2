"""Kalman/unscented update tests, including the linear-surrogate equivalence."""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from conftest import person_state, unit_camera
from mvglmb.gaussian import (
    Gaussian,
    UpdateFailedError,
    kalman_predict,
    log_sum_exp,
    moment_match,
    sigma_points,
    ukf_update,
    unscented_measurement,
)
from mvglmb.geometry import project_ellipsoids
from mvglmb.models import POS_IDX, SHAPE_IDX, MeasurementModel

MEAS = MeasurementModel(
    pos_noise_var=np.array([400.0, 400.0]),
    extent_noise_var=np.array([0.01, 0.0025]),
)


def depth_state(depth: float = 5.0) -> np.ndarray:
    state = person_state(0.3, -0.2)
    state[4] = depth  # the unit camera looks along +z
    return state


def small_prior(mean: np.ndarray, pos_std=0.05, vel_std=0.02, shape_std=0.02) -> Gaussian:
    var = np.array([pos_std**2, vel_std**2] * 3 + [shape_std**2] * 3)
    return Gaussian(mean=mean, cov=np.diag(var))


def project_state(state: np.ndarray, camera) -> np.ndarray:
    box4, ok, _ = project_ellipsoids(
        state[POS_IDX][None, :], np.exp(state[SHAPE_IDX])[None, :], camera
    )
    assert ok[0]
    return box4[0]


class TestKalmanPredict:
    def test_identity_transition(self):
        g = Gaussian(mean=np.arange(9.0), cov=np.eye(9) * 0.3)
        out = kalman_predict(g, np.eye(9), np.zeros(9), np.zeros((9, 9)))
        np.testing.assert_array_equal(out.mean, g.mean)
        np.testing.assert_array_equal(out.cov, g.cov)

    def test_additive_noise_growth(self):
        g = Gaussian(mean=np.zeros(9), cov=np.eye(9) * 0.3)
        out = kalman_predict(g, np.eye(9), np.zeros(9), 0.7 * np.eye(9))
        np.testing.assert_allclose(out.cov, np.eye(9) * 1.0)

    def test_matches_matrix_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            a = rng.standard_normal((9, 9))
            cov = a @ a.T + 0.1 * np.eye(9)
            f = rng.standard_normal((9, 9))
            drift = rng.standard_normal(9)
            qh = rng.standard_normal((9, 9))
            q = qh @ qh.T
            g = Gaussian(mean=rng.standard_normal(9), cov=cov)
            out = kalman_predict(g, f, drift, q)
            np.testing.assert_allclose(out.mean, f @ g.mean + drift, atol=1e-10)
            np.testing.assert_allclose(out.cov, f @ cov @ f.T + q, atol=1e-10)


class TestSigmaPoints:
    def test_reconstruct_first_two_moments(self):
        rng = np.random.default_rng(4)
        a = rng.standard_normal((9, 9))
        g = Gaussian(mean=rng.standard_normal(9), cov=a @ a.T + 0.5 * np.eye(9))
        pts, w_mean, w_cov = sigma_points(g)
        assert pts.shape == (19, 9)
        assert w_mean.sum() == pytest.approx(1.0)
        np.testing.assert_allclose(w_mean @ pts, g.mean, atol=1e-12)
        d = pts - g.mean
        recon = (w_cov[:, None] * d).T @ d
        np.testing.assert_allclose(recon, g.cov, atol=1e-7)


class TestUkfUpdate:
    def test_linear_surrogate_equals_exact_kalman(self):
        rng = np.random.default_rng(9)
        h = rng.standard_normal((4, 9))

        def measure_fn(pts):
            return pts @ h.T, np.ones(pts.shape[0], dtype=bool)

        a = rng.standard_normal((9, 9))
        prior = Gaussian(mean=rng.standard_normal(9), cov=a @ a.T + np.eye(9))
        z = rng.standard_normal(4)
        post, marginal = ukf_update(prior, z, MEAS, unit_camera(), measure_fn=measure_fn)

        r = MEAS.cov
        s = h @ prior.cov @ h.T + r
        gain = prior.cov @ h.T @ np.linalg.inv(s)
        want_mean = prior.mean + gain @ (z - h @ prior.mean)
        want_cov = prior.cov - gain @ s @ gain.T
        want_marginal = multivariate_normal.logpdf(z, mean=h @ prior.mean, cov=s)
        np.testing.assert_allclose(post.mean, want_mean, atol=1e-8)
        np.testing.assert_allclose(post.cov, want_cov, atol=1e-7)
        assert marginal == pytest.approx(want_marginal, abs=1e-8)

    def test_posterior_trace_never_exceeds_prior(self):
        rng = np.random.default_rng(14)
        h = rng.standard_normal((4, 9))

        def measure_fn(pts):
            return pts @ h.T, np.ones(pts.shape[0], dtype=bool)

        for _ in range(10):
            a = rng.standard_normal((9, 9))
            prior = Gaussian(mean=rng.standard_normal(9), cov=a @ a.T + np.eye(9))
            post, _ = ukf_update(
                prior, rng.standard_normal(4), MEAS, unit_camera(), measure_fn=measure_fn
            )
            assert np.trace(post.cov) <= np.trace(prior.cov) + 1e-9

    def test_near_noiseless_measurement_pins_projection(self):
        cam = unit_camera(focal=300.0)
        true = depth_state()
        true[0] += 0.01
        prior = small_prior(depth_state(), pos_std=0.02)
        sharp = MeasurementModel(
            pos_noise_var=np.array([1e-8, 1e-8]),
            extent_noise_var=np.array([1e-8, 1e-8]),
        )
        z = project_state(true, cam) + sharp.offset
        post, _ = ukf_update(prior, z, sharp, cam)
        reprojected = project_state(post.mean, cam)
        assert np.all(np.abs(reprojected[:2] - z[:2]) < 1e-3)

    def test_zero_innovation_keeps_prior_mean(self):
        cam = unit_camera(focal=300.0)
        mean = depth_state()
        prior = Gaussian(mean=mean, cov=1e-8 * np.eye(9))
        z = project_state(mean, cam) + MEAS.offset
        post, _ = ukf_update(prior, z, MEAS, cam)
        np.testing.assert_allclose(post.mean, mean, atol=1e-6)

    def test_marginal_decays_with_distance(self):
        cam = unit_camera(focal=300.0)
        prior = small_prior(depth_state())
        pred = unscented_measurement(prior, MEAS, cam)
        direction = np.array([30.0, -20.0, 0.05, 0.05])
        lls = [pred.loglik(pred.z_mean + k * direction) for k in range(6)]
        assert all(b < a for a, b in zip(lls, lls[1:]))

    def test_all_points_behind_camera_fails(self):
        cam = unit_camera(focal=300.0)
        behind = depth_state(depth=-5.0)
        prior = small_prior(behind)
        z = np.zeros(4)
        with pytest.raises(UpdateFailedError):
            ukf_update(prior, z, MEAS, cam)


class TestLogSumExp:
    def test_pair_of_zeros(self):
        assert log_sum_exp([0.0, 0.0]) == pytest.approx(math.log(2.0), abs=1e-15)

    def test_large_negative_stability(self):
        assert log_sum_exp([-1000.0, -1000.0]) == pytest.approx(
            -1000.0 + math.log(2.0), abs=1e-12
        )

    def test_minus_infinity_is_absorbed(self):
        assert log_sum_exp([-np.inf, 3.0]) == 3.0

    def test_all_minus_infinity(self):
        assert log_sum_exp([-np.inf, -np.inf]) == -np.inf

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            log_sum_exp([])


class TestMomentMatch:
    def test_identical_members_collapse_to_themselves(self):
        g = Gaussian(mean=np.arange(9.0), cov=np.eye(9) * 0.2)
        out = moment_match(np.log([0.5, 0.5]), [g, g])
        np.testing.assert_allclose(out.mean, g.mean, atol=1e-12)
        np.testing.assert_allclose(out.cov, g.cov, atol=1e-12)

    def test_two_point_mixture_moments(self):
        g1 = Gaussian(mean=np.zeros(9), cov=np.eye(9))
        mean2 = np.ones(9)
        g2 = Gaussian(mean=mean2, cov=2.0 * np.eye(9))
        out = moment_match(np.log([0.25, 0.75]), [g1, g2])
        want_mean = 0.75 * mean2
        np.testing.assert_allclose(out.mean, want_mean, atol=1e-12)
        want_cov = (
            0.25 * (np.eye(9) + np.outer(want_mean, want_mean))
            + 0.75 * (2.0 * np.eye(9) + np.outer(mean2 - want_mean, mean2 - want_mean))
        )
        np.testing.assert_allclose(out.cov, want_cov, atol=1e-12)

    def test_empty_mixture_rejected(self):
        with pytest.raises(ValueError):
            moment_match(np.array([]), [])
