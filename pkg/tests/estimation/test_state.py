import numpy as np
import pytest

from map_vio.estimation import (
    CameraCalibration,
    FilterState,
    ImuState,
    add_slam_feature,
    apply_correction,
    clone_state,
    marginalize,
    remove_slam_feature,
    transform_to_camera,
)
from map_vio.estimation.imu import check_covariance
from map_vio.exceptions import PropagationError, UpdateError
from map_vio.geometry import Pose, so3_exp


@pytest.fixture
def rng():
    """Fixture providing a seeded random generator."""
    return np.random.default_rng(11)


def _random_spd(rng, n):
    A = rng.normal(size=(n, n))
    return A @ A.T + n * np.eye(n)


def _state_with_clones(rng, n_clones, max_clones=11):
    fs = FilterState(
        imu=ImuState(R_GI=so3_exp(rng.normal(size=3)), p_GI=rng.normal(size=3)),
        max_clones=max_clones,
    )
    P = _random_spd(rng, 15)
    for k in range(n_clones):
        fs.imu = ImuState(R_GI=so3_exp(rng.normal(size=3)), p_GI=rng.normal(size=3))
        fs, P = clone_state(fs, P, 0.1 * (k + 1))
    return fs, P


def test_clone_copies_pose_covariance(rng):
    """A new clone has the pose block's marginal and full cross-covariance."""
    fs = FilterState()
    P = _random_spd(rng, 15)
    fs, P2 = clone_state(fs, P, 0.5)

    assert fs.covariance_dim == 21
    np.testing.assert_allclose(P2[15:21, 15:21], P[0:6, 0:6])
    np.testing.assert_allclose(P2[0:6, 15:21], P[0:6, 0:6])
    np.testing.assert_allclose(P2[:15, :15], P)


def test_successive_clones_are_perfectly_correlated(rng):
    """Two clones without propagation in between share one covariance block."""
    fs = FilterState()
    P = _random_spd(rng, 15)
    fs, P = clone_state(fs, P, 1.0)
    fs, P = clone_state(fs, P, 1.0 + 1e-6)
    np.testing.assert_allclose(P[15:21, 21:27], P[15:21, 15:21])
    np.testing.assert_allclose(P[21:27, 21:27], P[15:21, 15:21])


def test_clone_inserted_ahead_of_slam_features(rng):
    """Landmark blocks keep their covariance after a clone is added."""
    fs = FilterState()
    P = _random_spd(rng, 15)
    fs, P = add_slam_feature(fs, P, [1.0, 2.0, 3.0], 0.01 * np.eye(3))
    fs, P = clone_state(fs, P, 0.2)
    np.testing.assert_allclose(P[fs.slam_slice(0), fs.slam_slice(0)], 0.01 * np.eye(3))
    assert fs.slam_slice(0) == slice(21, 24)


def test_removing_slam_feature_keeps_other_blocks(rng):
    """Dropping a landmark removes exactly its rows and columns."""
    fs = FilterState()
    P = _random_spd(rng, 15)
    fs, P = add_slam_feature(fs, P, [1.0, 0.0, 0.0], 0.01 * np.eye(3))
    fs, P = add_slam_feature(fs, P, [0.0, 1.0, 0.0], 0.04 * np.eye(3))
    fs2, P2 = remove_slam_feature(fs, P, 0)

    assert len(fs2.slam_features) == 1
    assert len(fs.slam_features) == 2
    np.testing.assert_allclose(fs2.slam_features[0], [0.0, 1.0, 0.0])
    assert P2.shape == (18, 18)
    np.testing.assert_allclose(P2[15:18, 15:18], 0.04 * np.eye(3))
    np.testing.assert_allclose(P2[:15, :15], P[:15, :15])


def test_window_overflow_raises(rng):
    """Cloning into a full window is an error."""
    fs, P = _state_with_clones(rng, 3, max_clones=3)
    with pytest.raises(PropagationError):
        clone_state(fs, P, 10.0)


def test_clone_timestamps_must_increase(rng):
    """Reusing a clone timestamp is rejected."""
    fs, P = _state_with_clones(rng, 2)
    with pytest.raises(PropagationError):
        clone_state(fs, P, fs.clones[-1].timestamp)


def test_marginalize_shrinks_dimension(rng):
    """Removing the oldest clone drops six rows and columns."""
    fs, P = _state_with_clones(rng, 4)
    fs2, P2 = marginalize(fs, P)
    assert P2.shape == (15 + 18, 15 + 18)
    assert fs2.covariance_dim == P2.shape[0]


def test_marginalize_preserves_order(rng):
    """Remaining clones keep their order and their covariance blocks."""
    fs, P = _state_with_clones(rng, 4)
    fs2, P2 = marginalize(fs, P)
    assert fs2.clone_timestamps() == fs.clone_timestamps()[1:]
    np.testing.assert_array_equal(P2[15:, 15:], P[21:, 21:])
    np.testing.assert_array_equal(P2[:15, 15:], P[:15, 21:])


def test_marginalize_preserves_psd(rng):
    """The reduced covariance is still symmetric PSD."""
    fs, P = _state_with_clones(rng, 11)
    for _ in range(5):
        fs, P = marginalize(fs, P)
        check_covariance(P)


def test_unknown_policy_rejected(rng):
    """Only oldest-first marginalization is available."""
    fs, P = _state_with_clones(rng, 2)
    with pytest.raises(UpdateError):
        marginalize(fs, P, policy="newest")


def test_apply_correction_moves_every_block(rng):
    """Additive blocks shift and rotations follow exp(-dtheta) R."""
    fs, P = _state_with_clones(rng, 2)
    fs, P = add_slam_feature(fs, P, [0.0, 0.0, 1.0], np.eye(3))
    dx = rng.normal(size=fs.covariance_dim) * 1e-3
    out = apply_correction(fs, dx)

    np.testing.assert_allclose(out.imu.R_GI, so3_exp(-dx[0:3]) @ fs.imu.R_GI)
    np.testing.assert_allclose(out.imu.v_GI, fs.imu.v_GI + dx[6:9])
    np.testing.assert_allclose(out.clones[1].p_GI, fs.clones[1].p_GI + dx[24:27])
    np.testing.assert_allclose(out.slam_features[0], [0.0, 0.0, 1.0] + dx[27:30])
    np.testing.assert_allclose(fs.slam_features[0], [0.0, 0.0, 1.0])


def test_apply_correction_size_checked(rng):
    """A correction of the wrong length is refused."""
    fs, _ = _state_with_clones(rng, 1)
    with pytest.raises(UpdateError):
        apply_correction(fs, np.zeros(15))


def test_online_calibration_not_supported():
    """Activating extrinsic estimation is rejected."""
    with pytest.raises(PropagationError):
        FilterState(calib_active=True)


def test_transform_identity_calibration_at_imu_position(rng):
    """A point at the IMU position maps to the IMU origin in the camera frame."""
    calib = CameraCalibration(np.eye(3), [0.1, -0.2, 0.3])
    fs = FilterState(calib=calib)
    fs.imu = ImuState(p_GI=[1.0, 2.0, 3.0])
    fs, _ = clone_state(fs, np.eye(15), 0.0)
    np.testing.assert_allclose(
        transform_to_camera(fs, 0.0, [1.0, 2.0, 3.0]), [0.1, -0.2, 0.3]
    )


def test_transform_pure_translation():
    """With identity rotations the transform is a difference of positions."""
    fs = FilterState(calib=CameraCalibration(np.eye(3), np.zeros(3)))
    fs.imu = ImuState(p_GI=[1.0, 0.0, 0.0])
    fs, _ = clone_state(fs, np.eye(15), 0.0)
    np.testing.assert_allclose(transform_to_camera(fs, 0.0, [3.0, 1.0, 2.0]), [2.0, 1.0, 2.0])


def test_transform_matches_homogeneous_composition(rng):
    """transform_to_camera equals T_I_C T_G_I applied to the point."""
    for _ in range(20):
        calib = CameraCalibration(so3_exp(rng.normal(size=3)), rng.normal(size=3))
        R_GI, p_GI = so3_exp(rng.normal(size=3)), rng.normal(size=3)
        fs = FilterState(calib=calib, imu=ImuState(R_GI=R_GI, p_GI=p_GI))
        fs, _ = clone_state(fs, np.eye(15), 1.0)
        p_G = rng.normal(size=3)

        T_G_I = Pose(R_GI, -R_GI @ p_GI)
        T_I_C = Pose(calib.R_IC, calib.p_CI)
        expected = (T_I_C.matrix() @ T_G_I.matrix() @ np.append(p_G, 1.0))[:3]
        np.testing.assert_allclose(transform_to_camera(fs, 1.0, p_G), expected, atol=1e-12)


def test_missing_clone_raises(rng):
    """Asking for a clone that is not in the window fails."""
    fs, _ = _state_with_clones(rng, 2)
    with pytest.raises(UpdateError):
        transform_to_camera(fs, 5.0, np.zeros(3))
