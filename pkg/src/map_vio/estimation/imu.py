"""
IMU Propagation Module

Measurement model, mean propagation and error-state covariance propagation
for a strapdown IMU.

Conventions:

- ``R_GI`` maps global-frame vectors into the IMU frame (JPL ``q_GI``).
- Gravity is a global vector, default ``(0, 0, -9.81)``; the accelerometer
  reports specific force ``a_m = R_GI (a - g) + b_a + n_a``.
- Attitude error lives in the IMU frame: ``R_GI = (I - [dtheta x]) R_GI_hat``.
- Error-state order is attitude, position, velocity, gyro bias, accel bias;
  noise order is ``n_g, n_wg, n_a, n_wa``.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence, Tuple

import numpy as np

from ..exceptions import ConfigValidationError, PropagationError
from ..geometry import (
    UnitQuaternion,
    check_rotation,
    quat_to_rot,
    rot_to_quat,
    skew,
    so3_log,
)

logger = logging.getLogger(__name__)

# Error-state slices
ATT = slice(0, 3)
POS = slice(3, 6)
VEL = slice(6, 9)
BG = slice(9, 12)
BA = slice(12, 15)
IMU_DIM = 15

# Noise slices
N_G = slice(0, 3)
N_WG = slice(3, 6)
N_A = slice(6, 9)
N_WA = slice(9, 12)
NOISE_DIM = 12

MAX_DT = 0.1
PSD_TOL = 1e-10

DEFAULT_GRAVITY = np.array([0.0, 0.0, -9.81])


@dataclass(frozen=True)
class ImuSample:
    """
    One IMU reading.

    :ivar float t: Timestamp in seconds
    :ivar np.ndarray omega_m: Angular rate in rad/s
    :ivar np.ndarray accel_m: Specific force in m/s^2
    """

    t: float
    omega_m: np.ndarray
    accel_m: np.ndarray


@dataclass(frozen=True)
class NoiseParams:
    """
    Continuous-time IMU noise densities and pixel noise.

    :ivar float sigma_g: Gyro white noise, rad/s/sqrt(Hz)
    :ivar float sigma_a: Accel white noise, m/s^2/sqrt(Hz)
    :ivar float sigma_wg: Gyro bias random walk, rad/s^2/sqrt(Hz)
    :ivar float sigma_wa: Accel bias random walk, m/s^3/sqrt(Hz)
    :ivar float sigma_px: Captured feature pixel noise, pixels
    :ivar float sigma_r: Rendered feature pixel noise, pixels
    """

    sigma_g: float = 1.7e-4
    sigma_a: float = 2.0e-3
    sigma_wg: float = 2.0e-5
    sigma_wa: float = 3.0e-3
    sigma_px: float = 1.0
    sigma_r: float = 1.0

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not np.isfinite(value) or value <= 0.0:
                raise ConfigValidationError(f"Noise parameter {name} must be > 0")

    def continuous_covariance(self) -> np.ndarray:
        """12x12 diagonal Q in noise order ``n_g, n_wg, n_a, n_wa``."""
        return np.diag(
            np.repeat(
                [self.sigma_g**2, self.sigma_wg**2, self.sigma_a**2, self.sigma_wa**2],
                3,
            )
        )


@dataclass
class ImuState:
    """
    IMU navigation state.

    :ivar np.ndarray R_GI: Rotation from global to IMU frame
    :ivar np.ndarray p_GI: IMU position in the global frame, m
    :ivar np.ndarray v_GI: IMU velocity in the global frame, m/s
    :ivar np.ndarray bg: Gyro bias, rad/s
    :ivar np.ndarray ba: Accel bias, m/s^2
    """

    R_GI: np.ndarray = field(default_factory=lambda: np.eye(3))
    p_GI: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v_GI: np.ndarray = field(default_factory=lambda: np.zeros(3))
    bg: np.ndarray = field(default_factory=lambda: np.zeros(3))
    ba: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.R_GI = np.array(self.R_GI, dtype=float)
        for name in ("p_GI", "v_GI", "bg", "ba"):
            value = np.array(getattr(self, name), dtype=float).reshape(3)
            if not np.all(np.isfinite(value)):
                raise PropagationError(f"IMU state {name} is not finite")
            setattr(self, name, value)

    @property
    def q_GI(self) -> UnitQuaternion:
        return rot_to_quat(self.R_GI)

    @classmethod
    def from_quaternion(cls, q_GI: UnitQuaternion, **kwargs) -> "ImuState":
        return cls(R_GI=quat_to_rot(q_GI), **kwargs)


def interpolate_sample(s0: ImuSample, s1: ImuSample, t: float) -> ImuSample:
    """
    Linearly interpolate two readings at ``t`` in ``[s0.t, s1.t]``.

    :param ImuSample s0: Earlier reading
    :param ImuSample s1: Later reading
    :param float t: Query time
    :return: Interpolated reading
    :rtype: ImuSample
    """
    span = s1.t - s0.t
    if span <= 0.0:
        raise PropagationError(f"Samples are not increasing in time ({s0.t}, {s1.t})")
    alpha = (t - s0.t) / span
    return ImuSample(
        t,
        (1.0 - alpha) * s0.omega_m + alpha * s1.omega_m,
        (1.0 - alpha) * s0.accel_m + alpha * s1.accel_m,
    )


def _omega_matrix(w: np.ndarray) -> np.ndarray:
    """JPL quaternion rate matrix, ``q_dot = 0.5 * Omega(w) q``."""
    Om = np.zeros((4, 4))
    Om[:3, :3] = -skew(w)
    Om[:3, 3] = w
    Om[3, :3] = -w
    return Om


def _quat_to_rot_array(q: np.ndarray) -> np.ndarray:
    q = q / np.linalg.norm(q)
    v, w = q[:3], q[3]
    return (2.0 * w * w - 1.0) * np.eye(3) - 2.0 * w * skew(v) + 2.0 * np.outer(v, v)


def _derivative(q, v, omega, accel, gravity):
    q_dot = 0.5 * _omega_matrix(omega) @ q
    v_dot = _quat_to_rot_array(q).T @ accel + gravity
    return q_dot, v, v_dot


def propagate_mean(
    s: ImuState,
    samples: Sequence[ImuSample],
    gravity: np.ndarray = DEFAULT_GRAVITY,
) -> ImuState:
    """
    RK4 propagation of attitude, position and velocity between two readings.

    Readings are bias-corrected and linearly interpolated across the step.

    :param ImuState s: State at ``samples[0].t``
    :param samples: Pair of readings bracketing the step
    :type samples: Sequence[ImuSample]
    :param np.ndarray gravity: Global gravity vector
    :return: State at ``samples[1].t``
    :rtype: ImuState
    :raises PropagationError: If dt is not in (0, 0.1] s
    """
    s0, s1 = samples
    dt = s1.t - s0.t
    if not 0.0 < dt <= MAX_DT + 1e-12:
        raise PropagationError(f"Propagation step {dt} s outside (0, {MAX_DT}]")

    gravity = np.asarray(gravity, dtype=float)
    w0, w1 = s0.omega_m - s.bg, s1.omega_m - s.bg
    a0, a1 = s0.accel_m - s.ba, s1.accel_m - s.ba
    wm, am = 0.5 * (w0 + w1), 0.5 * (a0 + a1)

    q0 = rot_to_quat(s.R_GI).as_array()
    p0, v0 = s.p_GI, s.v_GI

    k1q, k1p, k1v = _derivative(q0, v0, w0, a0, gravity)
    k2q, k2p, k2v = _derivative(
        q0 + 0.5 * dt * k1q, v0 + 0.5 * dt * k1v, wm, am, gravity
    )
    k3q, k3p, k3v = _derivative(
        q0 + 0.5 * dt * k2q, v0 + 0.5 * dt * k2v, wm, am, gravity
    )
    k4q, k4p, k4v = _derivative(q0 + dt * k3q, v0 + dt * k3v, w1, a1, gravity)

    q1 = q0 + dt / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
    p1 = p0 + dt / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
    v1 = v0 + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)

    q1 = q1 / np.linalg.norm(q1)
    return replace(s, R_GI=_quat_to_rot_array(q1), p_GI=p1, v_GI=v1)


def error_state_jacobians(
    s: ImuState, sample: ImuSample
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Continuous-time error-state matrices ``x_dot = F x + G n``.

    :param ImuState s: Linearization state
    :param ImuSample sample: Reading at the linearization time
    :return: ``(F, G)`` of shapes 15x15 and 15x12
    :rtype: Tuple[np.ndarray, np.ndarray]
    """
    omega = sample.omega_m - s.bg
    accel = sample.accel_m - s.ba
    R_IG = s.R_GI.T

    F = np.zeros((IMU_DIM, IMU_DIM))
    F[ATT, ATT] = -skew(omega)
    F[ATT, BG] = -np.eye(3)
    F[POS, VEL] = np.eye(3)
    F[VEL, ATT] = -R_IG @ skew(accel)
    F[VEL, BA] = -R_IG

    G = np.zeros((IMU_DIM, NOISE_DIM))
    G[ATT, N_G] = -np.eye(3)
    G[VEL, N_A] = -R_IG
    G[BG, N_WG] = np.eye(3)
    G[BA, N_WA] = np.eye(3)
    return F, G


def check_covariance(P: np.ndarray, tol: float = PSD_TOL) -> None:
    """
    Validate symmetry and positive semi-definiteness.

    :param np.ndarray P: Covariance matrix
    :param float tol: Allowed negative eigenvalue magnitude, relative to max(1, trace)
    :raises PropagationError: If P is not symmetric PSD
    """
    if not np.all(np.isfinite(P)):
        raise PropagationError("Covariance contains non-finite entries")
    asym = np.max(np.abs(P - P.T))
    if asym > 1e-12 * max(1.0, float(np.max(np.abs(P)))):
        raise PropagationError(f"Covariance is not symmetric (max asymmetry {asym:.3e})")
    min_eig = float(np.min(np.linalg.eigvalsh(P)))
    if min_eig < -tol * max(1.0, float(np.trace(P))):
        raise PropagationError(f"Covariance is not PSD (min eigenvalue {min_eig:.3e})")


def propagate_covariance(
    P: np.ndarray,
    F: np.ndarray,
    G: np.ndarray,
    Q: np.ndarray,
    dt: float,
    check: bool = True,
) -> np.ndarray:
    """
    First-order discrete covariance propagation.

    ``Phi = I + F dt``; ``P' = Phi P Phi^T + Phi G Q G^T Phi^T dt``. When P is
    larger than the IMU block, the clone and feature blocks are carried
    through the cross-covariance.

    :param np.ndarray P: Joint covariance, IMU block first
    :param np.ndarray F: 15x15 error dynamics
    :param np.ndarray G: 15x12 noise input matrix
    :param np.ndarray Q: 12x12 continuous noise covariance
    :param float dt: Step length in seconds
    :param bool check: Validate P before propagating
    :return: Propagated, symmetrized covariance
    :rtype: np.ndarray
    :raises PropagationError: If P is not symmetric PSD or dt is not positive
    """
    if dt <= 0.0:
        raise PropagationError(f"Covariance step {dt} s must be positive")
    if check:
        check_covariance(P)

    Phi = np.eye(IMU_DIM) + F * dt
    PhiG = Phi @ G
    Qd = PhiG @ Q @ PhiG.T * dt

    out = np.array(P, dtype=float)
    out[:IMU_DIM, :IMU_DIM] = Phi @ P[:IMU_DIM, :IMU_DIM] @ Phi.T + Qd
    if P.shape[0] > IMU_DIM:
        cross = Phi @ P[:IMU_DIM, IMU_DIM:]
        out[:IMU_DIM, IMU_DIM:] = cross
        out[IMU_DIM:, :IMU_DIM] = cross.T
    return 0.5 * (out + out.T)


def attitude_error(R_true: np.ndarray, R_est: np.ndarray) -> np.ndarray:
    """
    Small-angle attitude error ``dtheta`` with ``R_true = exp(-[dtheta x]) R_est``.

    :param np.ndarray R_true: True global-to-IMU rotation
    :param np.ndarray R_est: Estimated global-to-IMU rotation
    :return: 3-vector in radians
    :rtype: np.ndarray
    """
    return -so3_log(check_rotation(R_true @ R_est.T, tol=1e-8))
