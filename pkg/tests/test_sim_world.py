import math

import numpy as np
import pytest

from vinselect.sim_world import (
    CameraModel,
    ImuParams,
    Landmark,
    ParameterError,
    horizontal_arc_length,
    landmarks_from_csv,
    landmarks_to_csv,
    make_circular_trajectory,
    make_straight_trajectory,
    rot_z,
    sample_landmarks,
    score_to_track_prob,
    simulate_measurement_noise,
)


def test_straight_line_keyframes():
    tr = make_straight_trajectory(2.0, 2.5, 0.5, 0.01)
    assert tr.n_frames == 6
    np.testing.assert_allclose(tr.positions[5], [5.0, 0.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(tr.keyframe_times, np.arange(6) * 0.5)
    assert np.all(tr.rotations == np.eye(3))
    assert np.all(tr.imu_subsample_rotations == np.eye(3))
    assert np.all(tr.imu_accelerations == 0.0)


def test_straight_line_stationary():
    tr = make_straight_trajectory(0.0, 2.0, 0.5, 0.1)
    assert np.all(tr.positions == tr.positions[0])
    assert np.all(tr.velocities == 0.0)


def test_straight_line_unit_step():
    tr = make_straight_trajectory(1.0, 1.0, 1.0, 0.01)
    assert tr.n_frames == 2
    assert np.linalg.norm(tr.positions[1] - tr.positions[0]) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("args", [(1.0, 0.1, 0.5, 0.01), (1.0, 1.0, 0.5, 1.0), (1.0, 1.0, 0.5, 0.03), (1.0, 1.0, 0.5, 0.0)])
def test_bad_timing(args):
    with pytest.raises(ParameterError):
        make_straight_trajectory(*args)


def test_circle_length_120m():
    radius = 120.0 / (2 * math.pi)
    tr = make_circular_trajectory(radius, 2.5 / radius, 0.5, 0.2, 48.0, 0.4, 0.01)
    assert horizontal_arc_length(radius, 2.5 / radius, 48.0) == pytest.approx(120.0, abs=1e-6)
    # closes the loop
    np.testing.assert_allclose(tr.positions[-1, :2], tr.positions[0, :2], atol=1e-9)


def test_circle_planar_when_flat():
    tr = make_circular_trajectory(5.0, 0.3, 0.0, 0.2, 4.0, 0.4, 0.01)
    assert np.ptp(tr.positions[:, 2]) == 0.0


def test_quarter_circle_geometry():
    r, w = 4.0, math.pi / 4
    tr = make_circular_trajectory(r, w, 0.0, 0.0, 2.0, 0.5, 0.01)
    # positions follow the discrete kinematics, O(dt^2) away from the analytic circle
    np.testing.assert_allclose(tr.positions[-1], [r, r, 0.0], atol=1e-4)
    np.testing.assert_allclose(tr.rotations[-1], rot_z(math.pi / 2), atol=1e-12)


def test_circle_rejects_bad_radius():
    with pytest.raises(ParameterError):
        make_circular_trajectory(0.0, 0.1, 0.0, 0.0, 2.0, 0.5, 0.01)


def test_circle_velocity_matches_finite_difference():
    tr = make_circular_trajectory(10.0, 0.2, 0.5, 0.2, 6.0, 0.4, 0.01)
    fd = np.diff(tr.positions, axis=0) / 0.4
    mid = 0.5 * (tr.velocities[1:] + tr.velocities[:-1])
    assert np.max(np.linalg.norm(fd - mid, axis=1) / np.linalg.norm(mid, axis=1)) < 0.1
    for R in tr.rotations:
        np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-12)


def test_sample_landmarks_contract():
    assert sample_landmarks(0, [(-1, -1, -1), (1, 1, 1)]) == []
    box = [(-10, -10, -10), (10, 10, 10)]
    a = sample_landmarks(100, box, seed=5)
    b = sample_landmarks(100, box, seed=5)
    assert all(np.array_equal(x.position, y.position) and x.score == y.score for x, y in zip(a, b))
    pts = np.array([lm.position for lm in a])
    assert np.all(pts >= -10) and np.all(pts <= 10)
    assert all(lm.track_prob == 1.0 for lm in a)


def test_landmark_csv_roundtrip():
    lms = sample_landmarks(5, [(0, 0, 0), (1, 2, 3)], seed=1)
    back = landmarks_from_csv(landmarks_to_csv(lms))
    for x, y in zip(lms, back):
        assert x.id == y.id and np.array_equal(x.position, y.position) and x.score == y.score


def test_landmark_rejects_bad_prob():
    with pytest.raises(ParameterError):
        Landmark(0, np.zeros(3), track_prob=1.5)


def test_score_to_track_prob():
    assert score_to_track_prob(1.0, 0.0, 1.0) == 1.0
    assert score_to_track_prob(0.0, 0.0, 1.0, 0.5) == 0.5
    assert score_to_track_prob(0.5, 0.0, 1.0, 0.5) == pytest.approx(0.75)
    xs = np.linspace(-1, 2, 50)
    ps = [score_to_track_prob(x, 0.0, 1.0, 0.3) for x in xs]
    assert np.all(np.diff(ps) >= 0) and min(ps) >= 0.3 and max(ps) <= 1.0
    with pytest.raises(ParameterError):
        score_to_track_prob(0.5, 1.0, 1.0)


def test_camera_rejects_improper_rotation():
    with pytest.raises(ParameterError):
        CameraModel(extrinsic_rotation=np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(ParameterError):
        CameraModel(focal=0.0)


def test_noise_determinism_and_variance():
    tr = make_straight_trajectory(2.0, 500.0, 0.5, 0.01)  # 10^5 ticks
    imu = ImuParams()
    lms = sample_landmarks(3, [(1, -1, -1), (5, 1, 1)], seed=0)
    a = simulate_measurement_noise(tr, lms, imu, CameraModel(), 1.0, seed=11)
    b = simulate_measurement_noise(tr, lms, imu, CameraModel(), 1.0, seed=11)
    assert np.array_equal(a.accel, b.accel) and np.array_equal(a.vision_noise, b.vision_noise)
    var = a.accel_noise.var()
    assert abs(var / (imu.accel_noise_density**2 / imu.delta) - 1.0) < 0.05


def test_noiseless_log_matches_kinematics():
    tr = make_circular_trajectory(6.0, 0.4, 0.3, 0.25, 2.0, 0.5, 0.01)
    imu = ImuParams()
    log = simulate_measurement_noise(tr, [], imu, CameraModel(), 1.0, seed=2, prior_cov=np.eye(9), noise_scale=0.0)
    assert np.all(log.accel_noise == 0) and np.all(log.biases == 0)
    # readings rotate back to the specific force
    world = np.einsum("hmij,hmj->hmi", tr.imu_subsample_rotations, log.accel)
    np.testing.assert_allclose(world + imu.gravity_vector, tr.imu_accelerations, atol=1e-12)


def test_trajectory_window_and_csv():
    tr = make_straight_trajectory(1.0, 3.0, 0.5, 0.05)
    w = tr.window(2, 3)
    assert w.n_frames == 3 and w.imu_subsample_rotations.shape[0] == 2
    np.testing.assert_array_equal(w.positions, tr.positions[2:5])
    with pytest.raises(ParameterError):
        tr.window(5, 3)
    text = tr.to_csv()
    assert text.count("\n") == tr.n_frames + 1 and "\r" not in text
