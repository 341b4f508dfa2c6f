from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import random_pose

from rangeslam.ekf import LANDMARK_PROFILES, EkfBelief, EkfNoise, RangeEKF
from rangeslam.eqf import EquivariantFilter, FilterError, NoiseConfig
from rangeslam.lie import ExtendedPose, exp_se23
from rangeslam.runner import run_filter
from rangeslam.sim import RangeStream, SensorSpec, TrajectorySpec, generate

E3 = np.array([0.0, 0.0, 1.0])


def _belief(rng, n, ekf):
    pose = random_pose(rng, 1.0)
    p = pose.x + rng.normal(size=(n, 3)) * 8 + 2
    d = 9 + 3 * n
    G = rng.normal(size=(d, d)) * 0.1
    return EkfBelief(pose, p, G @ G.T + 0.01 * np.eye(d), tuple(range(n)))


def test_add_landmark_identity_pose():
    f = RangeEKF()
    b = f.add_landmark(f.initial_belief(), 3, 1.0)
    np.testing.assert_array_equal(b.p[0], E3)
    assert f.predicted_ranges(b)[0] == 1.0


def test_add_landmark_predicted_range_and_block(rng):
    f = RangeEKF(noise=EkfNoise.with_profile("ground"))
    b = f.add_landmark(f.initial_belief(random_pose(rng)), 0, 7.5)
    assert abs(f.predicted_ranges(b)[0] - 7.5) < 1e-12
    np.testing.assert_array_equal(b.Sigma[9:, 9:], np.diag([10.0] * 3))
    np.testing.assert_array_equal(b.Sigma[:9, 9:], 0.0)


def test_profiles():
    assert LANDMARK_PROFILES == {"aerial": 50.0, "ground": 10.0}
    assert EkfNoise.with_profile("aerial").sigma0_lm == (50.0,) * 3


def test_add_landmark_rejects_duplicates_and_bad_range():
    f = RangeEKF()
    b = f.add_landmark(f.initial_belief(), 0, 2.0)
    with pytest.raises(ValueError):
        f.add_landmark(b, 0, 2.0)
    with pytest.raises(ValueError):
        f.add_landmark(b, 1, 0.0)


def test_update_with_predicted_range_keeps_mean(rng):
    f = RangeEKF()
    b = _belief(rng, 3, f)
    b2 = f.update(b, [0, 2], f.predicted_ranges(b)[[0, 2]])
    np.testing.assert_array_equal(b2.pose.as_matrix(), b.pose.as_matrix())
    np.testing.assert_array_equal(b2.p, b.p)


def test_jacobian_landmark_directly_above():
    f = RangeEKF()
    b = f.add_landmark(f.initial_belief(), 0, 4.0)
    H = f.mat_H(b, [0])
    np.testing.assert_allclose(H[0, 9:12], E3, atol=1e-15)
    np.testing.assert_allclose(H[0, 6:9], -E3, atol=1e-15)


def test_jacobian_against_finite_differences(rng):
    # range through the nav retraction P = exp(eps) P_hat and p = p_hat + dp
    f = RangeEKF()
    h = 1e-6
    for _ in range(50):
        b = _belief(rng, 3, f)
        H = f.mat_H(b, [0, 1, 2])

        def ranges(e):
            P = exp_se23(e[:9]) @ b.pose
            p = b.p + e[9:].reshape(-1, 3)
            return np.linalg.norm(p - P.x, axis=1)

        fd = np.empty_like(H)
        for j in range(H.shape[1]):
            e = np.zeros(H.shape[1])
            e[j] = h
            fd[:, j] = (ranges(e) - ranges(-e)) / (2 * h)
        np.testing.assert_allclose(H, fd, atol=1e-5)


def test_singular_innovation_raises():
    f = RangeEKF(noise=EkfNoise(range_var=0.0))
    b = f.add_landmark(f.initial_belief(), 0, 5.0)
    b = replace(b, Sigma=np.zeros_like(b.Sigma))
    with pytest.raises(FilterError):
        f.update(b, [0], [6.0])


def test_update_rejects_nonpositive_and_unknown(rng):
    f = RangeEKF()
    b = _belief(rng, 2, f)
    with pytest.raises(ValueError):
        f.update(b, [0], [-1.0])
    with pytest.raises(KeyError):
        f.update(b, [9], [1.0])


def test_update_reduces_uncertainty(rng):
    f = RangeEKF()
    b = _belief(rng, 2, f)
    b2 = f.update(b, [0], [f.predicted_ranges(b)[0] + 0.5])
    assert np.trace(b2.Sigma) < np.trace(b.Sigma)
    assert np.linalg.eigvalsh(b2.Sigma).min() > 0


def test_zero_input_zero_state_unchanged():
    f = RangeEKF(gravity=0.0)
    b = f.initial_belief()
    b2 = f.propagate(b, np.zeros(3), np.zeros(3), 0.01)
    np.testing.assert_array_equal(b2.pose.as_matrix(), np.eye(5))


@settings(max_examples=30)
@given(st.integers(0, 2**31), st.floats(1e-4, 0.05))
def test_landmark_mean_invariant_under_propagation(seed, dt):
    rng = np.random.default_rng(seed)
    f = RangeEKF()
    b = _belief(rng, 4, f)
    b2 = f.propagate(b, rng.normal(size=3), rng.normal(size=3) * 5, dt)
    np.testing.assert_array_equal(b2.p, b.p)


def test_kernel_matches_reference(rng):
    fast, ref = RangeEKF(), RangeEKF(fast=False)
    b1 = b2 = _belief(rng, 3, fast)
    for _ in range(50):
        w, a = rng.normal(size=3), rng.normal(size=3) * 3
        b1 = fast.propagate(b1, w, a, 0.0025)
        b2 = ref.propagate(b2, w, a, 0.0025)
    np.testing.assert_allclose(b1.pose.as_matrix(), b2.pose.as_matrix(), atol=1e-12)
    np.testing.assert_allclose(b1.Sigma, b2.Sigma, rtol=1e-12, atol=1e-14)


def test_no_landmarks_matches_eqf_navigation():
    out = generate(TrajectorySpec(duration=20.0), SensorSpec(), seed=3, noise=True)
    empty = RangeStream(np.zeros(0), np.zeros(0, dtype=int), np.zeros(0))
    P0 = ExtendedPose(out.truth.R[0], out.truth.v[0], out.truth.p[0])
    nav = NoiseConfig().sigma0_nav
    eqf = EquivariantFilter()
    ekf = RangeEKF(noise=EkfNoise(sigma0_nav=nav))
    r1 = run_filter(eqf, out.imu, empty, P0)
    r2 = run_filter(ekf, out.imu, empty, P0)
    np.testing.assert_allclose(r1.p, r2.p, atol=1e-9, rtol=0)
    np.testing.assert_allclose(r1.v, r2.v, atol=1e-9, rtol=0)
    np.testing.assert_allclose(r1.quat, r2.quat, atol=1e-9, rtol=0)

    # nav covariance blocks after identical input streams
    bq, be = eqf.initial_belief(P0), ekf.initial_belief(P0)
    for k in range(400):
        bq = eqf.propagate(bq, out.imu.omega[k], out.imu.accel[k], 0.0025)
        be = ekf.propagate(be, out.imu.omega[k], out.imu.accel[k], 0.0025)
    np.testing.assert_allclose(bq.Sigma, be.Sigma, rtol=1e-9, atol=1e-15)
