import math

import numpy as np
import pytest

from map_vio.estimation import (
    CameraCalibration,
    ImuState,
    Intrinsics,
    NoiseParams,
    propagate_mean,
    triangulate,
)
from map_vio.exceptions import ConfigValidationError
from map_vio.geometry import so3_log
from map_vio.sim import (
    GroundTruth,
    Scene,
    Trajectory,
    TrajectorySpec,
    generate_scene,
    generate_truth,
    synthesize_camera,
    synthesize_imu,
)


@pytest.fixture
def spec():
    """Fixture providing a short orbit."""
    return TrajectorySpec(duration=10.0)


@pytest.fixture
def truth(spec):
    """Fixture providing ground truth at 200 Hz."""
    return generate_truth(spec, imu_rate=200.0)


def _stationary_truth(n, rate=200.0):
    t = np.arange(n) / rate
    zeros = np.zeros((n, 3))
    return GroundTruth(
        t=t,
        R_GI=np.tile(np.eye(3), (n, 1, 1)),
        p=zeros.copy(),
        v=zeros.copy(),
        a=zeros.copy(),
        omega_I=zeros.copy(),
        bg=zeros.copy(),
        ba=zeros.copy(),
        trajectory=None,
    )


def test_invalid_spec_rejected():
    """Non-positive radius or duration is a configuration error."""
    with pytest.raises(ConfigValidationError):
        TrajectorySpec(radius=0.0)
    with pytest.raises(ConfigValidationError):
        TrajectorySpec(duration=-1.0)


def test_zero_rate_hovers():
    """Without angular rate the pose never changes."""
    gt = generate_truth(TrajectorySpec(angular_rate=0.0, duration=2.0))
    np.testing.assert_allclose(gt.p, np.tile(gt.p[0], (len(gt), 1)), atol=1e-15)
    np.testing.assert_allclose(gt.v, 0.0, atol=1e-15)
    np.testing.assert_allclose(gt.omega_I, 0.0, atol=1e-15)


def test_orbit_keeps_radius(truth, spec):
    """Horizontal distance from the scene center equals the orbit radius."""
    np.testing.assert_allclose(np.linalg.norm(truth.p[:, :2], axis=1), spec.radius)


def test_velocity_matches_finite_differences(spec):
    """Analytic velocity and acceleration match central differences."""
    traj = Trajectory(spec)
    t = np.linspace(0.0, spec.duration, 97)
    h = 1e-5
    plus, minus = traj.kinematics(t + h), traj.kinematics(t - h)
    kin = traj.kinematics(t)
    assert np.max(np.abs((plus["p"] - minus["p"]) / (2 * h) - kin["v"])) < 1e-6
    assert np.max(np.abs((plus["v"] - minus["v"]) / (2 * h) - kin["a"])) < 1e-6


def test_angular_rate_matches_attitude_change(spec):
    """Body angular rate equals the logarithm of the relative rotation over time."""
    traj = Trajectory(spec)
    h = 1e-5
    for t in np.linspace(0.5, spec.duration - 0.5, 23):
        R0 = traj.kinematics(t - h)["R_WI"][0]
        R1 = traj.kinematics(t + h)["R_WI"][0]
        omega = so3_log(R0.T @ R1) / (2 * h)
        np.testing.assert_allclose(
            omega, traj.kinematics(t)["omega_I"][0], atol=1e-7
        )


def test_camera_looks_at_scene_center(truth):
    """The scene center projects onto the optical axis at every frame."""
    calib = CameraCalibration()
    for t in (0.0, 2.5, 7.3):
        p_C = truth.camera_pose(t, calib).apply([0.0, 0.0, 0.0])
        assert p_C[2] > 0.0
        np.testing.assert_allclose(p_C[:2] / p_C[2], 0.0, atol=1e-12)


def test_level_stationary_reading_is_gravity():
    """A level, resting IMU reads +9.81 along its z axis and nothing else."""
    samples = synthesize_imu(_stationary_truth(10), None, seed=0)
    for s in samples:
        np.testing.assert_allclose(s.accel_m, [0.0, 0.0, 9.81], atol=1e-15)
        np.testing.assert_allclose(s.omega_m, 0.0, atol=1e-15)


def test_noise_free_readings_propagate_to_truth(truth):
    """Integrating exact readings for 10 s stays within 0.1 mm of the truth."""
    samples = synthesize_imu(truth, None, seed=0)
    s = ImuState(R_GI=truth.R_GI[0], p_GI=truth.p[0], v_GI=truth.v[0])
    for k in range(1, len(samples)):
        s = propagate_mean(s, samples[k - 1 : k + 1])
    assert np.linalg.norm(s.p_GI - truth.p[-1]) < 1e-4
    assert np.linalg.norm(so3_log(s.R_GI @ truth.R_GI[-1].T)) < 1e-5


def test_noise_statistics_match_densities():
    """White noise and bias steps have the configured standard deviations."""
    rate = 200.0
    gt = _stationary_truth(100_001, rate)
    noise = NoiseParams()
    samples = synthesize_imu(gt, noise, seed=3)
    dt = 1.0 / rate

    omega = np.array([s.omega_m for s in samples]) - gt.bg
    accel = np.array([s.accel_m for s in samples]) - gt.ba - [0.0, 0.0, 9.81]
    assert np.std(omega) == pytest.approx(noise.sigma_g / math.sqrt(dt), rel=0.05)
    assert np.std(accel) == pytest.approx(noise.sigma_a / math.sqrt(dt), rel=0.05)
    assert np.std(np.diff(gt.bg, axis=0)) == pytest.approx(
        noise.sigma_wg * math.sqrt(dt), rel=0.05
    )
    assert np.std(np.diff(gt.ba, axis=0)) == pytest.approx(
        noise.sigma_wa * math.sqrt(dt), rel=0.05
    )
    np.testing.assert_array_equal(gt.bg[0], 0.0)


def test_imu_stream_is_deterministic(spec):
    """Equal seeds give bitwise-equal readings."""
    a = synthesize_imu(generate_truth(spec), NoiseParams(), seed=9)
    b = synthesize_imu(generate_truth(spec), NoiseParams(), seed=9)
    for s0, s1 in zip(a, b):
        np.testing.assert_array_equal(s0.omega_m, s1.omega_m)
        np.testing.assert_array_equal(s0.accel_m, s1.accel_m)


def test_scene_layout():
    """Table landmarks lie on the unit table, wall landmarks on the room walls."""
    scene = generate_scene(0)
    assert len(scene) == 300
    table, wall = scene.positions[:200], scene.positions[200:]
    np.testing.assert_array_equal(table[:, 2], 0.0)
    assert np.all(np.abs(table[:, :2]) <= 0.5)
    assert np.allclose(np.max(np.abs(wall[:, :2]), axis=1), scene.room_half_size)
    assert np.all((np.abs(scene.amplitudes) >= 0.25) & (np.abs(scene.amplitudes) <= 0.5))


def test_landmark_behind_camera_never_observed(truth):
    """Only the landmark in front of the first camera pose is observed."""
    calib = CameraCalibration()
    T_C_W = truth.camera_pose(0.0, calib).inverse()
    scene = Scene(
        ids=np.array([0, 1]),
        positions=np.array([T_C_W.apply([0.0, 0.0, -1.0]), T_C_W.apply([0.0, 0.0, 1.0])]),
        amplitudes=np.array([0.3, 0.3]),
        radii=np.array([0.01, 0.01]),
    )
    frames = synthesize_camera(truth, scene, Intrinsics(), 30.0, 0.0, seed=0)
    assert set(frames[0].observations) == {1}
    assert all(0 not in f.observations for f in frames)


def test_observations_have_positive_depth(truth):
    """Every observed landmark is more than 10 cm in front of the camera."""
    scene = generate_scene(1)
    calib = CameraCalibration()
    for f in synthesize_camera(truth, scene, Intrinsics(), 10.0, 0.0, seed=0):
        T = truth.camera_pose(f.t_imu, calib)
        for i in f.observations:
            assert T.apply(scene.positions[i])[2] > 0.1


def test_time_offset_stamps_frames(truth):
    """Frames carry the camera clock while exposure follows the IMU clock."""
    frames = synthesize_camera(
        truth, generate_scene(0), Intrinsics(), 30.0, 0.0, seed=0, time_offset=0.01
    )
    for f in frames[:5]:
        assert f.t == pytest.approx(f.t_imu + 0.01, abs=1e-15)


def test_exact_observations_triangulate(truth):
    """Noise-free observations from three frames recover a landmark to 1 um."""
    scene = generate_scene(2)
    intrinsics = Intrinsics()
    calib = CameraCalibration()
    frames = synthesize_camera(truth, scene, intrinsics, 30.0, 0.0, seed=0)
    chosen = [frames[120], frames[180], frames[240]]
    common = set.intersection(*(set(f.observations) for f in chosen))
    assert common

    for lid in sorted(common)[:10]:
        views = [
            (
                truth.camera_pose(f.t_imu, calib),
                intrinsics.pixel_to_normalized(f.observations[lid]),
            )
            for f in chosen
        ]
        assert np.linalg.norm(triangulate(views) - scene.positions[lid]) < 1e-6


def test_pixel_noise_matches_sigma(truth):
    """Observation noise has the configured standard deviation."""
    scene = generate_scene(4)
    exact = synthesize_camera(truth, scene, Intrinsics(), 30.0, 0.0, seed=5)
    noisy = synthesize_camera(truth, scene, Intrinsics(), 30.0, 1.5, seed=5)
    residuals = []
    for f0, f1 in zip(exact, noisy):
        assert set(f0.observations) == set(f1.observations)
        for lid, uv in f0.observations.items():
            residuals.append(f1.observations[lid] - uv)
    residuals = np.asarray(residuals)
    assert residuals.size > 10_000
    assert np.std(residuals) == pytest.approx(1.5, rel=0.05)
    assert abs(np.mean(residuals)) < 0.05
