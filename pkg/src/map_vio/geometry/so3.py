"""
Rotation group helpers.

Rotations are stored as 3x3 matrices everywhere in the package. Quaternions only
appear at file boundaries and follow the JPL convention: the quaternion
``(x, y, z, w)`` of a rotation matrix ``C`` satisfies

    C = (2w^2 - 1) I - 2w [q x] + 2 q q^T

so a JPL quaternion for ``C`` has the same components as the Hamilton quaternion
of ``C^T``. The hemisphere ``w >= 0`` is enforced on construction.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from ..exceptions import GeometryError, LogDegeneracyError

logger = logging.getLogger(__name__)

ORTHONORMAL_TOL = 1e-10
QUATERNION_NORM_TOL = 1e-9
# Logs closer than this to a half turn have no canonical axis
DEGENERACY_MARGIN = 1e-6
SMALL_ANGLE = 1e-3


def skew(v: np.ndarray) -> np.ndarray:
    """
    Cross-product matrix ``[v x]`` such that ``skew(a) @ b == cross(a, b)``.

    :param np.ndarray v: 3-vector
    :return: 3x3 skew-symmetric matrix
    :rtype: np.ndarray
    """
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(S: np.ndarray) -> np.ndarray:
    """Inverse of :func:`skew` (no symmetry check)."""
    return np.array([S[2, 1], S[0, 2], S[1, 0]])


def check_rotation(R: np.ndarray, tol: float = ORTHONORMAL_TOL) -> np.ndarray:
    """
    Validate a rotation matrix.

    :param np.ndarray R: Candidate 3x3 matrix
    :param float tol: Tolerance on ``R^T R - I`` and ``det(R) - 1``
    :return: The matrix as a float array
    :rtype: np.ndarray
    :raises GeometryError: If the matrix is not a proper rotation
    """
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise GeometryError(f"Rotation must be a finite 3x3 matrix, got shape {R.shape}")

    orth_err = np.max(np.abs(R.T @ R - np.eye(3)))
    if orth_err > tol:
        raise GeometryError(f"Matrix is not orthonormal (error {orth_err:.3e})")

    det = np.linalg.det(R)
    if abs(det - 1.0) > tol:
        raise GeometryError(f"Matrix is not a proper rotation (det {det:.12f})")
    return R


def so3_exp(phi: np.ndarray) -> np.ndarray:
    """
    Rodrigues exponential ``exp([phi x])``.

    :param np.ndarray phi: Rotation vector in radians
    :return: 3x3 rotation matrix
    :rtype: np.ndarray
    """
    phi = np.asarray(phi, dtype=float)
    theta_sq = float(phi @ phi)
    theta = math.sqrt(theta_sq)
    K = skew(phi)

    if theta < SMALL_ANGLE:
        A = 1.0 - theta_sq / 6.0 + theta_sq**2 / 120.0
        B = 0.5 - theta_sq / 24.0 + theta_sq**2 / 720.0
    else:
        A = math.sin(theta) / theta
        B = (1.0 - math.cos(theta)) / theta_sq

    return np.eye(3) + A * K + B * (K @ K)


def so3_log(R: np.ndarray) -> np.ndarray:
    """
    Rotation vector of ``R`` with angle in ``[0, pi - 1e-6]``.

    :param np.ndarray R: 3x3 rotation matrix
    :return: Rotation vector
    :rtype: np.ndarray
    :raises LogDegeneracyError: If the rotation angle is within 1e-6 of pi
    """
    R = np.asarray(R, dtype=float)
    w = 0.5 * vee(R - R.T)  # sin(theta) * axis
    s = float(np.linalg.norm(w))
    c = 0.5 * (np.trace(R) - 1.0)
    theta = math.atan2(s, c)

    if theta > math.pi - DEGENERACY_MARGIN:
        raise LogDegeneracyError(
            f"Rotation angle {theta:.9f} rad is too close to pi for a unique log"
        )

    if theta < SMALL_ANGLE:
        return w * (1.0 + theta * theta / 6.0 + 7.0 * theta**4 / 360.0)

    if c >= 0.0:
        return w * (theta / s)

    # Beyond a quarter turn the antisymmetric part loses precision; read the
    # axis off the symmetric part and take its sign from w.
    B = 0.5 * (R + R.T) - c * np.eye(3)
    k = int(np.argmax(np.diag(B)))
    axis = B[:, k] / math.sqrt(B[k, k] * (1.0 - c))
    if axis @ w < 0.0:
        axis = -axis
    return theta * axis / np.linalg.norm(axis)


def rotation_angle(R: np.ndarray) -> float:
    """Geodesic angle of a rotation matrix in radians, valid up to pi."""
    w = 0.5 * vee(R - R.T)
    c = 0.5 * (np.trace(R) - 1.0)
    return math.atan2(float(np.linalg.norm(w)), c)


@dataclass(frozen=True)
class UnitQuaternion:
    """
    JPL unit quaternion ``(x, y, z, w)`` with scalar last.

    Construction normalizes inputs whose norm is within tolerance of one and
    flips the sign so that ``w >= 0``.

    :ivar float x: First vector component
    :ivar float y: Second vector component
    :ivar float z: Third vector component
    :ivar float w: Scalar component
    """

    x: float
    y: float
    z: float
    w: float

    def __post_init__(self):
        q = np.array([self.x, self.y, self.z, self.w], dtype=float)
        if not np.all(np.isfinite(q)):
            raise GeometryError("Quaternion components must be finite")

        norm = float(np.linalg.norm(q))
        if abs(norm - 1.0) > QUATERNION_NORM_TOL:
            raise GeometryError(f"Quaternion is not unit norm (norm {norm:.12f})")

        q = q / norm
        if q[3] < 0.0:
            q = -q
        for name, value in zip(("x", "y", "z", "w"), q):
            object.__setattr__(self, name, float(value))

    @classmethod
    def identity(cls) -> "UnitQuaternion":
        return cls(0.0, 0.0, 0.0, 1.0)

    @classmethod
    def from_array(cls, q) -> "UnitQuaternion":
        """Build from an ``(x, y, z, w)`` sequence."""
        x, y, z, w = (float(c) for c in q)
        return cls(x, y, z, w)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.w])


def quat_to_rot(q: UnitQuaternion) -> np.ndarray:
    """
    Rotation matrix of a JPL quaternion.

    :param UnitQuaternion q: Unit quaternion
    :return: 3x3 rotation matrix
    :rtype: np.ndarray
    """
    v = np.array([q.x, q.y, q.z])
    w = q.w
    return (2.0 * w * w - 1.0) * np.eye(3) - 2.0 * w * skew(v) + 2.0 * np.outer(v, v)


def rot_to_quat(R: np.ndarray) -> UnitQuaternion:
    """
    JPL quaternion of a rotation matrix, hemisphere ``w >= 0``.

    :param np.ndarray R: 3x3 rotation matrix
    :return: Unit quaternion
    :rtype: UnitQuaternion
    :raises GeometryError: If ``R`` is not a proper rotation
    """
    R = check_rotation(R)
    # scipy returns scalar-last Hamilton components; those of R^T are JPL for R
    xyzw = Rotation.from_matrix(R.T).as_quat()
    return UnitQuaternion.from_array(xyzw / np.linalg.norm(xyzw))
