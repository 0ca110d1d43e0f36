"""
Sliding-window filter state.

The error-state vector is laid out as::

    [ IMU (15) | clone_0 (6) ... clone_{m-1} (6) | slam_0 (3) ... slam_{k-1} (3) ]

Each clone block is ``(dtheta, dp)`` of a past IMU pose. Clones are keyed by
the camera timestamp that triggered them; the stored pose is the IMU pose at
``t_cam - t_d``. ``T_W_G`` maps prior-map coordinates into the filter's
global frame and ``Sigma_init`` is its 6x6 uncertainty, ordered
``(rotation, translation)``. Both stay fixed during a run.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from ..exceptions import PropagationError, UpdateError
from ..geometry import Pose, check_rotation, so3_exp
from .imu import ATT, BA, BG, IMU_DIM, POS, VEL, ImuState

logger = logging.getLogger(__name__)

CLONE_DIM = 6
SLAM_DIM = 3

# Fixed camera mounting: IMU is x-forward, y-left, z-up; camera is z-forward,
# y-down. Maps IMU-frame vectors into the camera frame.
R_IC_DEFAULT = np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])


@dataclass(frozen=True)
class Clone:
    """
    Stochastic clone of a past IMU pose.

    :ivar float timestamp: Camera timestamp the clone belongs to
    :ivar np.ndarray R_GI: Global-to-IMU rotation at ``timestamp - t_d``
    :ivar np.ndarray p_GI: IMU position at ``timestamp - t_d``
    """

    timestamp: float
    R_GI: np.ndarray
    p_GI: np.ndarray

    def camera_pose(self, calib: "CameraCalibration") -> Pose:
        """Pose mapping global coordinates into this clone's camera frame."""
        R_GC = calib.R_IC @ self.R_GI
        return Pose(R_GC, calib.p_CI - R_GC @ self.p_GI)


@dataclass(frozen=True)
class CameraCalibration:
    """
    Camera-IMU extrinsics.

    :ivar np.ndarray R_IC: IMU-to-camera rotation
    :ivar np.ndarray p_CI: IMU origin expressed in the camera frame, m
    """

    R_IC: np.ndarray = field(default_factory=lambda: R_IC_DEFAULT.copy())
    p_CI: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "R_IC", check_rotation(self.R_IC))
        object.__setattr__(
            self, "p_CI", np.asarray(self.p_CI, dtype=float).reshape(3)
        )

    @classmethod
    def from_offset(cls, offset_I: np.ndarray) -> "CameraCalibration":
        """Build extrinsics from the camera position expressed in the IMU frame."""
        return cls(R_IC_DEFAULT.copy(), -R_IC_DEFAULT @ np.asarray(offset_I, float))


@dataclass
class FilterState:
    """
    Mean of the sliding-window filter.

    :ivar ImuState imu: Current IMU state
    :ivar float timestamp: Time of ``imu``, s
    :ivar List[Clone] clones: Cloned poses, oldest first
    :ivar List[np.ndarray] slam_features: Persistent global landmarks
    :ivar CameraCalibration calib: Camera-IMU extrinsics (not estimated)
    :ivar float t_d: Camera-IMU time offset, ``t_imu = t_cam - t_d``
    :ivar Pose T_W_G: Prior-map to global transform
    :ivar np.ndarray Sigma_init: 6x6 uncertainty of ``T_W_G``
    :ivar int max_clones: Window capacity
    """

    imu: ImuState = field(default_factory=ImuState)
    timestamp: float = 0.0
    clones: List[Clone] = field(default_factory=list)
    slam_features: List[np.ndarray] = field(default_factory=list)
    calib: CameraCalibration = field(default_factory=CameraCalibration)
    t_d: float = 0.0
    T_W_G: Pose = field(default_factory=Pose.identity)
    Sigma_init: np.ndarray = field(default_factory=lambda: np.zeros((6, 6)))
    max_clones: int = 11
    calib_active: bool = False
    td_active: bool = False

    def __post_init__(self):
        if self.calib_active or self.td_active:
            raise PropagationError(
                "Online extrinsic and time-offset estimation are not supported"
            )
        if self.max_clones < 2:
            raise PropagationError(f"Window capacity {self.max_clones} must be >= 2")

    @property
    def covariance_dim(self) -> int:
        return (
            IMU_DIM
            + CLONE_DIM * len(self.clones)
            + SLAM_DIM * len(self.slam_features)
        )

    def clone_timestamps(self) -> List[float]:
        return [c.timestamp for c in self.clones]

    def clone_index(self, timestamp: float, tol: float = 1e-9) -> int:
        """
        Position of the clone keyed by ``timestamp``.

        :param float timestamp: Camera timestamp
        :param float tol: Matching tolerance, s
        :return: Index into ``clones``
        :rtype: int
        :raises UpdateError: If no clone has that timestamp
        """
        for i, c in enumerate(self.clones):
            if abs(c.timestamp - timestamp) <= tol:
                return i
        raise UpdateError(f"No clone at t={timestamp:.6f}")

    def clone_slice(self, index: int) -> slice:
        start = IMU_DIM + CLONE_DIM * index
        return slice(start, start + CLONE_DIM)

    def slam_slice(self, index: int) -> slice:
        start = IMU_DIM + CLONE_DIM * len(self.clones) + SLAM_DIM * index
        return slice(start, start + SLAM_DIM)

    def copy(self) -> "FilterState":
        return replace(
            self,
            imu=replace(self.imu),
            clones=list(self.clones),
            slam_features=[f.copy() for f in self.slam_features],
        )


def clone_state(fs: FilterState, P: np.ndarray, timestamp: float):
    """
    Append a clone of the current IMU pose and augment the covariance.

    The new block is inserted after the existing clones, ahead of the SLAM
    features, and is fully correlated with the IMU attitude and position.

    :param FilterState fs: Filter state; its IMU time must be ``timestamp - t_d``
    :param np.ndarray P: Joint covariance
    :param float timestamp: Camera timestamp keying the clone
    :return: ``(fs, P)`` with one more clone
    :rtype: Tuple[FilterState, np.ndarray]
    :raises PropagationError: If the window is full or the timestamp is taken
    """
    if len(fs.clones) >= fs.max_clones:
        raise PropagationError(
            f"Clone window full ({fs.max_clones}); marginalize before cloning"
        )
    if fs.clones and timestamp <= fs.clones[-1].timestamp:
        raise PropagationError(
            f"Clone timestamp {timestamp:.6f} not after {fs.clones[-1].timestamp:.6f}"
        )

    n = P.shape[0]
    insert_at = IMU_DIM + CLONE_DIM * len(fs.clones)
    J = np.zeros((n + CLONE_DIM, n))
    J[:insert_at, :insert_at] = np.eye(insert_at)
    J[insert_at : insert_at + 3, ATT] = np.eye(3)
    J[insert_at + 3 : insert_at + 6, POS] = np.eye(3)
    J[insert_at + CLONE_DIM :, insert_at:] = np.eye(n - insert_at)

    out = fs.copy()
    out.clones.append(Clone(timestamp, fs.imu.R_GI.copy(), fs.imu.p_GI.copy()))
    P_new = J @ P @ J.T
    logger.debug(f"Cloned IMU pose for t={timestamp:.4f} ({len(out.clones)} clones)")
    return out, 0.5 * (P_new + P_new.T)


def _remove_block(P: np.ndarray, sl: slice) -> np.ndarray:
    keep = np.r_[0 : sl.start, sl.stop : P.shape[0]]
    return P[np.ix_(keep, keep)]


def marginalize(fs: FilterState, P: np.ndarray, policy: str = "oldest"):
    """
    Drop a clone from the window.

    :param FilterState fs: Filter state
    :param np.ndarray P: Joint covariance
    :param str policy: Only ``"oldest"`` is supported
    :return: ``(fs, P)`` with one clone fewer
    :rtype: Tuple[FilterState, np.ndarray]
    :raises UpdateError: For an unknown policy or an empty window
    """
    if policy != "oldest":
        raise UpdateError(f"Unknown marginalization policy '{policy}'")
    if not fs.clones:
        raise UpdateError("No clone to marginalize")
    out = fs.copy()
    dropped = out.clones.pop(0)
    logger.debug(f"Marginalized clone t={dropped.timestamp:.4f}")
    return out, _remove_block(P, fs.clone_slice(0))


def add_slam_feature(
    fs: FilterState, P: np.ndarray, p_G: np.ndarray, cov: np.ndarray
) -> Tuple[FilterState, np.ndarray]:
    """
    Append a persistent landmark with an uncorrelated prior.

    :param FilterState fs: Filter state
    :param np.ndarray P: Joint covariance
    :param np.ndarray p_G: Landmark position in the global frame
    :param np.ndarray cov: 3x3 prior covariance
    :return: ``(fs, P)`` with the landmark appended
    :rtype: Tuple[FilterState, np.ndarray]
    """
    out = fs.copy()
    out.slam_features.append(np.asarray(p_G, dtype=float).reshape(3).copy())
    n = P.shape[0]
    P_new = np.zeros((n + SLAM_DIM, n + SLAM_DIM))
    P_new[:n, :n] = P
    P_new[n:, n:] = cov
    return out, P_new


def remove_slam_feature(
    fs: FilterState, P: np.ndarray, index: int
) -> Tuple[FilterState, np.ndarray]:
    out = fs.copy()
    out.slam_features.pop(index)
    return out, _remove_block(P, fs.slam_slice(index))


def _correct_rotation(R: np.ndarray, dtheta: np.ndarray) -> np.ndarray:
    return so3_exp(-dtheta) @ R


def apply_correction(fs: FilterState, dx: np.ndarray) -> FilterState:
    """
    Inject an error-state correction into the mean.

    Rotations follow ``R = exp(-[dtheta x]) R_hat``; everything else is additive.

    :param FilterState fs: Filter state
    :param np.ndarray dx: Correction of length ``fs.covariance_dim``
    :return: Corrected state
    :rtype: FilterState
    :raises UpdateError: If the correction has the wrong size or is not finite
    """
    dx = np.asarray(dx, dtype=float)
    if dx.shape != (fs.covariance_dim,):
        raise UpdateError(
            f"Correction has size {dx.shape}, state has {fs.covariance_dim}"
        )
    if not np.all(np.isfinite(dx)):
        raise UpdateError("Correction is not finite")

    out = fs.copy()
    imu = out.imu
    out.imu = ImuState(
        R_GI=_correct_rotation(imu.R_GI, dx[ATT]),
        p_GI=imu.p_GI + dx[POS],
        v_GI=imu.v_GI + dx[VEL],
        bg=imu.bg + dx[BG],
        ba=imu.ba + dx[BA],
    )
    out.clones = [
        Clone(
            c.timestamp,
            _correct_rotation(c.R_GI, dx[fs.clone_slice(i)][:3]),
            c.p_GI + dx[fs.clone_slice(i)][3:],
        )
        for i, c in enumerate(fs.clones)
    ]
    out.slam_features = [
        f + dx[fs.slam_slice(j)] for j, f in enumerate(fs.slam_features)
    ]
    return out


def transform_to_camera(
    fs: FilterState, clone_ts: float, p_G: np.ndarray
) -> np.ndarray:
    """
    Express a global point in the camera frame of a clone.

    ``p_C = R_IC R_GI (p_G - p_GI) + p_CI`` with the clone pose at
    ``clone_ts - t_d``.

    :param FilterState fs: Filter state
    :param float clone_ts: Camera timestamp of the clone
    :param np.ndarray p_G: Point in the global frame
    :return: Point in the camera frame
    :rtype: np.ndarray
    """
    c = fs.clones[fs.clone_index(clone_ts)]
    return fs.calib.R_IC @ (c.R_GI @ (np.asarray(p_G, float) - c.p_GI)) + fs.calib.p_CI


def initial_covariance(
    attitude: float = 1e-4,
    position: float = 1e-6,
    velocity: float = 1e-4,
    gyro_bias: float = 1e-6,
    accel_bias: float = 1e-4,
    Sigma: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Diagonal 15x15 IMU covariance from per-block variances.

    :param float attitude: rad^2
    :param float position: m^2
    :param float velocity: (m/s)^2
    :param float gyro_bias: (rad/s)^2
    :param float accel_bias: (m/s^2)^2
    :param Sigma: Optional 6x6 pose covariance ``(rotation, position)`` that
        replaces the attitude and position blocks
    :type Sigma: Optional[np.ndarray]
    :return: Covariance
    :rtype: np.ndarray
    """
    P = np.diag(
        np.repeat([attitude, position, velocity, gyro_bias, accel_bias], 3)
    ).astype(float)
    if Sigma is not None:
        P[0:6, 0:6] = Sigma
    return P
