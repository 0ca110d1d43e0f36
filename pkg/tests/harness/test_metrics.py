import numpy as np
import pytest

from map_vio.estimation import ImuState
from map_vio.exceptions import ExperimentError
from map_vio.geometry import Pose, so3_exp
from map_vio.metrics import (
    PoseTrajectory,
    align_rigid,
    associate,
    compute_ate,
    imu_error,
    nees,
)


@pytest.fixture
def orbit():
    """Fixture providing a smooth ground-truth trajectory."""
    t = np.linspace(0.0, 20.0, 2001)
    R = np.array([so3_exp(np.array([0.1 * np.sin(s), 0.05 * s, 0.2 * s])) for s in t])
    p = np.column_stack([np.cos(0.3 * t), np.sin(0.3 * t), 0.1 * np.sin(t)])
    return PoseTrajectory(t, R, p)


def test_identical_trajectories_have_zero_error(orbit):
    """An estimate equal to the ground truth has zero ATE."""
    rot, pos = compute_ate(orbit, orbit)
    assert rot == pytest.approx(0.0, abs=1e-6)
    assert pos == pytest.approx(0.0, abs=1e-9)


def test_alignment_removes_rigid_transform(orbit):
    """A rigidly moved estimate has zero ATE after alignment."""
    T = Pose(so3_exp(np.array([0.3, -0.2, 1.1])), np.array([2.0, -1.0, 0.5]))
    rot, pos = compute_ate(orbit.transformed(T), orbit)
    assert rot == pytest.approx(0.0, abs=1e-5)
    assert pos == pytest.approx(0.0, abs=1e-9)


def test_position_noise_matches_direct_rms(orbit):
    """One centimeter white position noise gives about one centimeter ATE."""
    rng = np.random.default_rng(3)
    noise = rng.normal(scale=0.01 / np.sqrt(3.0), size=orbit.p.shape)
    est = PoseTrajectory(orbit.t, orbit.R_GI, orbit.p + noise)
    direct = np.sqrt(np.mean(np.sum(noise**2, axis=1)))
    _, pos = compute_ate(est, orbit)
    assert pos == pytest.approx(0.01, rel=0.1)
    assert pos == pytest.approx(direct, rel=0.1)
    assert pos <= direct + 1e-12


def test_align_rigid_recovers_transform():
    """Closed-form alignment returns the transform between point sets."""
    rng = np.random.default_rng(8)
    model = rng.normal(size=(50, 3))
    R = so3_exp(np.array([0.4, 0.1, -0.7]))
    data = model @ R.T + np.array([1.0, 2.0, 3.0])
    T = align_rigid(model, data)
    np.testing.assert_allclose(T.rotation, R, atol=1e-10)
    np.testing.assert_allclose(T.translation, [1.0, 2.0, 3.0], atol=1e-10)


def test_associate_nearest_within_tolerance():
    """Estimates pair with the nearest ground-truth time inside the tolerance."""
    i_est, i_gt = associate(np.array([0.0004, 0.5, 1.0002]), np.array([0.0, 1.0, 2.0]))
    np.testing.assert_array_equal(i_est, [0, 2])
    np.testing.assert_array_equal(i_gt, [0, 1])


def test_no_overlap_raises(orbit):
    """Trajectories without matching timestamps cannot be compared."""
    late = PoseTrajectory(orbit.t + 100.0, orbit.R_GI, orbit.p)
    with pytest.raises(ExperimentError):
        compute_ate(late, orbit)


def test_mismatched_arrays_rejected():
    """Trajectory arrays of different lengths are rejected."""
    with pytest.raises(ExperimentError):
        PoseTrajectory(np.zeros(3), np.tile(np.eye(3), (2, 1, 1)), np.zeros((3, 3)))


def test_nees_of_unit_covariance_is_squared_norm():
    """With identity covariance NEES is the squared error norm."""
    e = np.arange(15, dtype=float)
    assert nees(e, np.eye(15)) == pytest.approx(float(e @ e))
    assert nees(e, 4.0 * np.eye(15)) == pytest.approx(float(e @ e) / 4.0)


def test_imu_error_of_exact_state_is_zero():
    """The true state has a zero error vector."""
    R = so3_exp(np.array([0.2, 0.3, -0.1]))
    p, v = np.array([1.0, 2.0, 3.0]), np.array([0.1, 0.0, -0.2])
    bg, ba = np.full(3, 1e-3), np.full(3, 1e-2)
    err = imu_error(R, p, v, bg, ba, ImuState(R, p, v, bg, ba))
    assert err.shape == (15,)
    np.testing.assert_allclose(err, 0.0, atol=1e-12)
