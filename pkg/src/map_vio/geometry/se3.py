"""
SE(3) arithmetic and the left-invariant metric family.

Twists are ordered ``(omega, vel)``: rotational part first, translational part
second. ``se3_exp`` maps a twist to the pose ``[R, V vel; 0, 1]`` with
``R = exp([omega x])``.

The metric on the Lie algebra is parameterized by a 3-vector ``a`` with
``||a|| < 1`` through the 4x4 matrix ``M = [[I, a], [a^T, 1]]``. On twists the
trace form ``tr(x1^T x2 M)`` reduces to the 6x6 block matrix
``[[2I, [a x]], [-[a x], I]]``. Distances are taken through the relative
element ``S1^-1 S2``, so left multiplication of both arguments leaves them
unchanged.
"""

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..exceptions import GeometryError
from .so3 import SMALL_ANGLE, check_rotation, skew, so3_exp, so3_log, vee

# Gauss-Legendre nodes for the SE(3) Jacobian integral; exact to double
# precision for rotation angles up to pi.
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)
_GL_NODES = 0.5 * (_GL_NODES + 1.0)
_GL_WEIGHTS = 0.5 * _GL_WEIGHTS


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Pose:
    """
    Rigid transform ``x -> R x + t``.

    :ivar np.ndarray rotation: 3x3 orthonormal matrix with det +1
    :ivar np.ndarray translation: 3-vector in meters
    """

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = check_rotation(self.rotation)
        t = np.asarray(self.translation, dtype=float).reshape(-1)
        if t.shape != (3,) or not np.all(np.isfinite(t)):
            raise GeometryError("Pose translation must be a finite 3-vector")
        object.__setattr__(self, "rotation", _frozen(R))
        object.__setattr__(self, "translation", _frozen(t))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, T: np.ndarray) -> "Pose":
        """
        Build a pose from a 4x4 homogeneous matrix.

        :param np.ndarray T: Homogeneous transform
        :return: Pose
        :rtype: Pose
        :raises GeometryError: If the bottom row is not ``[0, 0, 0, 1]``
        """
        T = np.asarray(T, dtype=float)
        if T.shape != (4, 4) or not np.allclose(T[3], [0.0, 0.0, 0.0, 1.0]):
            raise GeometryError("Homogeneous transform must be 4x4 with [0 0 0 1] row")
        return cls(T[:3, :3], T[:3, 3])

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def inverse(self) -> "Pose":
        Rt = self.rotation.T
        return Pose(Rt, -Rt @ self.translation)

    def __matmul__(self, other: "Pose") -> "Pose":
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one point (3,) or many points (N, 3)."""
        points = np.asarray(points, dtype=float)
        return points @ self.rotation.T + self.translation

    def adjoint(self) -> np.ndarray:
        """6x6 adjoint acting on ``(omega, vel)`` twists."""
        R = self.rotation
        Ad = np.zeros((6, 6))
        Ad[:3, :3] = R
        Ad[3:, 3:] = R
        Ad[3:, :3] = skew(self.translation) @ R
        return Ad


@dataclass(frozen=True)
class Twist:
    """
    Element of se(3).

    :ivar np.ndarray omega: Rotational part in radians
    :ivar np.ndarray vel: Translational part in meters
    """

    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    vel: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in ("omega", "vel"):
            v = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if v.shape != (3,) or not np.all(np.isfinite(v)):
                raise GeometryError(f"Twist {name} must be a finite 3-vector")
            object.__setattr__(self, name, _frozen(v))

    @classmethod
    def from_vector(cls, xi: Sequence[float]) -> "Twist":
        xi = np.asarray(xi, dtype=float)
        return cls(xi[:3], xi[3:6])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.omega, self.vel])

    def hat(self) -> np.ndarray:
        """4x4 tangent matrix ``[[omega x], vel; 0, 0]``."""
        X = np.zeros((4, 4))
        X[:3, :3] = skew(self.omega)
        X[:3, 3] = self.vel
        return X


@dataclass(frozen=True)
class MetricParam:
    """
    Parameter ``a`` of the left-invariant metric, strictly inside the unit ball.

    :ivar np.ndarray a: 3-vector
    """

    a: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).reshape(-1)
        if a.shape != (3,) or not np.all(np.isfinite(a)):
            raise GeometryError("Metric parameter must be a finite 3-vector")
        norm = float(np.linalg.norm(a))
        if norm >= 1.0:
            raise GeometryError(
                f"Metric parameter norm {norm:.6f} must be < 1 for a positive metric"
            )
        object.__setattr__(self, "a", _frozen(a))


def _v_coefficients(theta_sq: float):
    """Return ``(B, C)`` with B = (1 - cos)/theta^2 and C = (theta - sin)/theta^3."""
    if theta_sq < SMALL_ANGLE * SMALL_ANGLE:
        B = 0.5 - theta_sq / 24.0 + theta_sq**2 / 720.0
        C = 1.0 / 6.0 - theta_sq / 120.0 + theta_sq**2 / 5040.0
    else:
        theta = math.sqrt(theta_sq)
        B = (1.0 - math.cos(theta)) / theta_sq
        C = (theta - math.sin(theta)) / (theta_sq * theta)
    return B, C


def se3_exp(t: Twist) -> Pose:
    """
    Closed-form exponential of a twist.

    :param Twist t: Twist ``(omega, vel)``
    :return: Pose
    :rtype: Pose
    """
    K = skew(t.omega)
    B, C = _v_coefficients(float(t.omega @ t.omega))
    V = np.eye(3) + B * K + C * (K @ K)
    return Pose(so3_exp(t.omega), V @ t.vel)


def se3_log(p: Pose) -> Twist:
    """
    Logarithm of a pose with rotation angle below ``pi - 1e-6``.

    :param Pose p: Pose
    :return: Twist with ``||omega|| < pi``
    :rtype: Twist
    :raises LogDegeneracyError: If the rotation angle is too close to pi
    """
    omega = so3_log(p.rotation)
    theta_sq = float(omega @ omega)
    K = skew(omega)

    if theta_sq < SMALL_ANGLE * SMALL_ANGLE:
        D = 1.0 / 12.0 + theta_sq / 720.0 + theta_sq**2 / 30240.0
    else:
        theta = math.sqrt(theta_sq)
        half = 0.5 * theta
        D = (1.0 - half * math.cos(half) / math.sin(half)) / theta_sq

    V_inv = np.eye(3) - 0.5 * K + D * (K @ K)
    return Twist(omega, V_inv @ p.translation)


def tangent_to_twist(X: np.ndarray, tol: float = 1e-12) -> Twist:
    """
    Read a twist off a 4x4 tangent matrix.

    :param np.ndarray X: Matrix of the form ``[[W, v], [0, 0]]`` with W skew
    :param float tol: Tolerance on skew symmetry and the zero bottom row
    :return: Twist
    :rtype: Twist
    :raises GeometryError: If the matrix does not have tangent structure
    """
    X = np.asarray(X, dtype=float)
    if X.shape != (4, 4):
        raise GeometryError(f"Tangent matrix must be 4x4, got {X.shape}")
    W = X[:3, :3]
    if np.max(np.abs(W + W.T)) > tol:
        raise GeometryError("Upper-left block of a tangent matrix must be skew")
    if np.max(np.abs(X[3])) > tol:
        raise GeometryError("Bottom row of a tangent matrix must be zero")
    return Twist(vee(W), X[:3, 3])


def metric_matrix(a: MetricParam) -> np.ndarray:
    """
    4x4 metric matrix ``[[I, a], [a^T, 1]]``.

    Eigenvalues are ``1, 1, 1 - ||a||, 1 + ||a||``.

    :param MetricParam a: Metric parameter
    :return: Symmetric positive-definite matrix
    :rtype: np.ndarray
    """
    M = np.eye(4)
    M[:3, 3] = a.a
    M[3, :3] = a.a
    return M


def inner_trace(x1: np.ndarray, x2: np.ndarray, M: np.ndarray) -> float:
    """
    Trace inner product ``tr(x1^T x2 M)`` of two tangent matrices.

    :param np.ndarray x1: 4x4 tangent matrix
    :param np.ndarray x2: 4x4 tangent matrix
    :param np.ndarray M: 4x4 metric matrix
    :return: Inner product
    :rtype: float
    :raises GeometryError: If either argument is not a tangent matrix
    """
    tangent_to_twist(x1)
    tangent_to_twist(x2)
    return float(np.trace(np.asarray(x1).T @ np.asarray(x2) @ np.asarray(M)))


def metric_block(a: MetricParam) -> np.ndarray:
    """6x6 matrix of the metric on ``(omega, vel)`` coordinates."""
    A = skew(a.a)
    B = np.zeros((6, 6))
    B[:3, :3] = 2.0 * np.eye(3)
    B[:3, 3:] = A
    B[3:, :3] = -A
    B[3:, 3:] = np.eye(3)
    return B


def inner_closed(t1: Twist, t2: Twist, a: MetricParam) -> float:
    """
    Closed-form inner product of two twists.

    :param Twist t1: First twist
    :param Twist t2: Second twist
    :param MetricParam a: Metric parameter
    :return: Inner product
    :rtype: float
    """
    return float(t1.as_vector() @ metric_block(a) @ t2.as_vector())


def geodesic_dist_sq(S1: Pose, S2: Pose, a: MetricParam) -> float:
    """
    Squared geodesic distance through the relative log ``log(S1^-1 S2)``.

    :param Pose S1: First pose
    :param Pose S2: Second pose
    :param MetricParam a: Metric parameter
    :return: Non-negative squared distance
    :rtype: float
    :raises LogDegeneracyError: If the relative rotation is near a half turn
    """
    xi = se3_log(S1.inverse() @ S2)
    return inner_closed(xi, xi, a)


def left_jacobian(xi: np.ndarray) -> np.ndarray:
    """
    Left Jacobian of SE(3), ``exp(xi + d) ~ exp(J_l d) exp(xi)``.

    Evaluated as the integral of ``Ad(exp(s xi))`` over ``s`` in ``[0, 1]``.

    :param np.ndarray xi: Twist vector ``(omega, vel)``
    :return: 6x6 Jacobian
    :rtype: np.ndarray
    """
    xi = np.asarray(xi, dtype=float)
    J = np.zeros((6, 6))
    for s, w in zip(_GL_NODES, _GL_WEIGHTS):
        J += w * se3_exp(Twist.from_vector(s * xi)).adjoint()
    return J


def right_jacobian(xi: np.ndarray) -> np.ndarray:
    """Right Jacobian of SE(3), ``exp(xi + d) ~ exp(xi) exp(J_r d)``."""
    return left_jacobian(-np.asarray(xi, dtype=float))
