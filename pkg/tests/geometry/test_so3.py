import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from map_vio.exceptions import GeometryError, LogDegeneracyError
from map_vio.geometry import (
    UnitQuaternion,
    quat_to_rot,
    rot_to_quat,
    skew,
    so3_exp,
    so3_log,
)


@pytest.fixture
def rng():
    """Fixture providing a seeded random generator."""
    return np.random.default_rng(1234)


def _random_quaternion(rng):
    q = rng.normal(size=4)
    return UnitQuaternion.from_array(q / np.linalg.norm(q))


def test_identity_quaternion_is_identity_matrix():
    """Identity quaternion maps to the identity rotation."""
    np.testing.assert_allclose(quat_to_rot(UnitQuaternion.identity()), np.eye(3))


def test_quarter_turn_about_z_follows_jpl_convention():
    """A 90 degree z rotation puts +1 at R[0][1], the transpose of Rodrigues."""
    h = math.sqrt(0.5)
    R = quat_to_rot(UnitQuaternion(0.0, 0.0, h, h))
    rodrigues = Rotation.from_rotvec([0.0, 0.0, math.pi / 2]).as_matrix()

    assert R[0, 1] == pytest.approx(1.0)
    np.testing.assert_allclose(R, rodrigues.T, atol=1e-15)


def test_quaternion_round_trip(rng):
    """quat -> rot -> quat reproduces 1000 random quaternions up to sign."""
    max_err = 0.0
    for _ in range(1000):
        q = _random_quaternion(rng)
        back = rot_to_quat(quat_to_rot(q))
        max_err = max(max_err, np.max(np.abs(back.as_array() - q.as_array())))
    assert max_err < 1e-12


def test_hemisphere_enforced():
    """Negative scalar parts are flipped on construction."""
    q = UnitQuaternion(0.0, 0.0, -math.sqrt(0.5), -math.sqrt(0.5))
    assert q.w > 0.0
    assert q.z > 0.0


def test_non_unit_quaternion_rejected():
    """A quaternion far from unit norm raises."""
    with pytest.raises(GeometryError):
        UnitQuaternion(0.0, 0.0, 0.0, 2.0)


def test_non_orthonormal_matrix_rejected():
    """A scaled matrix is not accepted as a rotation."""
    with pytest.raises(GeometryError):
        rot_to_quat(1.01 * np.eye(3))


def test_so3_log_inverts_exp(rng):
    """so3_log(so3_exp(phi)) == phi across small, medium and large angles."""
    for scale in (1e-8, 1e-4, 0.5, 2.0, 3.1):
        for _ in range(50):
            axis = rng.normal(size=3)
            phi = scale * axis / np.linalg.norm(axis)
            np.testing.assert_allclose(so3_log(so3_exp(phi)), phi, atol=1e-10)


def test_so3_exp_matches_scipy(rng):
    """Rodrigues formula agrees with scipy's rotation vector conversion."""
    for _ in range(20):
        phi = rng.normal(size=3)
        expected = Rotation.from_rotvec(phi).as_matrix()
        np.testing.assert_allclose(so3_exp(phi), expected, atol=1e-14)


def test_so3_log_half_turn_raises():
    """The log of a half turn is degenerate."""
    with pytest.raises(LogDegeneracyError):
        so3_log(so3_exp([math.pi, 0.0, 0.0]))


def test_skew_is_cross_product(rng):
    """skew(a) @ b equals cross(a, b)."""
    a, b = rng.normal(size=3), rng.normal(size=3)
    np.testing.assert_allclose(skew(a) @ b, np.cross(a, b), atol=1e-15)
