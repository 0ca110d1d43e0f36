"""
Trajectory and initialization metrics.

Estimated and ground-truth trajectories are associated by nearest timestamp,
rigidly aligned in closed form and compared by RMS rotation angle and
position error.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .estimation import attitude_error
from .exceptions import ExperimentError
from .geometry import Pose, rotation_angle
from .learning import MlpModel, TrainSample, pose_errors, timed_relocalize

logger = logging.getLogger(__name__)

MATCH_TOLERANCE = 1e-3


@dataclass
class PoseTrajectory:
    """
    Timestamped IMU poses.

    :ivar np.ndarray t: (N,) timestamps, s
    :ivar np.ndarray R_GI: (N, 3, 3) global-to-IMU rotations
    :ivar np.ndarray p: (N, 3) positions, m
    """

    t: np.ndarray
    R_GI: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float).reshape(-1)
        self.R_GI = np.asarray(self.R_GI, dtype=float).reshape(-1, 3, 3)
        self.p = np.asarray(self.p, dtype=float).reshape(-1, 3)
        if not len(self.t) == len(self.R_GI) == len(self.p):
            raise ExperimentError(
                f"Trajectory arrays disagree: {len(self.t)}, {len(self.R_GI)}, {len(self.p)}"
            )

    def __len__(self) -> int:
        return len(self.t)

    def transformed(self, T: Pose) -> "PoseTrajectory":
        """Trajectory re-expressed in the frame ``T`` maps the global frame into."""
        return PoseTrajectory(
            self.t, self.R_GI @ T.rotation.T, self.p @ T.rotation.T + T.translation
        )


@dataclass
class MetricsReport:
    """
    Outcome of one experiment run.

    Wall-clock latency is kept apart from the deterministic fields.
    """

    seed: int
    map_updates: bool
    init_mode: str
    ate_rot_deg: float
    ate_pos_m: float
    init_rot_deg: float = 0.0
    init_pos_cm: float = 0.0
    n_captured_updates: int = 0
    n_rendered_updates: int = 0
    n_rendered_features: int = 0
    n_rejected_cells: int = 0
    mean_captured_chi2: float = 0.0
    mean_rendered_chi2: float = 0.0
    mean_nees: float = 0.0
    init_latency_s: float = field(default=0.0, compare=False)

    def as_row(self) -> Dict[str, object]:
        """Deterministic fields for the metrics files."""
        row = asdict(self)
        row.pop("init_latency_s")
        return row

    def timing_row(self) -> Dict[str, object]:
        return {"seed": self.seed, "init_latency_s": self.init_latency_s}


def associate(
    t_est: np.ndarray, t_gt: np.ndarray, max_dt: float = MATCH_TOLERANCE
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Pair each estimate with the nearest ground-truth timestamp.

    :param np.ndarray t_est: Estimate timestamps
    :param np.ndarray t_gt: Sorted ground-truth timestamps
    :param float max_dt: Largest accepted time difference, s
    :return: Index arrays ``(i_est, i_gt)``
    :rtype: Tuple[np.ndarray, np.ndarray]
    """
    t_est = np.asarray(t_est, dtype=float)
    t_gt = np.asarray(t_gt, dtype=float)
    if len(t_est) == 0 or len(t_gt) == 0:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    right = np.minimum(np.searchsorted(t_gt, t_est), len(t_gt) - 1)
    left = np.maximum(right - 1, 0)
    nearest = np.where(
        np.abs(t_gt[left] - t_est) <= np.abs(t_gt[right] - t_est), left, right
    )
    ok = np.abs(t_gt[nearest] - t_est) <= max_dt
    return np.flatnonzero(ok), nearest[ok]


def align_rigid(model: np.ndarray, data: np.ndarray) -> Pose:
    """
    Rotation and translation that best map ``model`` points onto ``data``.

    Closed-form least squares through the SVD of the cross-covariance, with
    the reflection case corrected and no scale.

    :param np.ndarray model: (N, 3) points
    :param np.ndarray data: (N, 3) points
    :return: Pose ``T`` minimizing ``sum |data - T(model)|^2``
    :rtype: Pose
    """
    mu_m, mu_d = model.mean(axis=0), data.mean(axis=0)
    W = (data - mu_d).T @ (model - mu_m)
    U, _, Vh = np.linalg.svd(W)
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vh) < 0.0:
        S[2, 2] = -1.0
    R = U @ S @ Vh
    return Pose(R, mu_d - R @ mu_m)


def compute_ate(
    est: PoseTrajectory, gt: PoseTrajectory, max_dt: float = MATCH_TOLERANCE
) -> Tuple[float, float]:
    """
    Absolute trajectory error after rigid alignment.

    :param PoseTrajectory est: Estimated trajectory
    :param PoseTrajectory gt: Ground-truth trajectory with sorted timestamps
    :param float max_dt: Timestamp association tolerance, s
    :return: RMS ``(rotation degrees, position meters)``
    :rtype: Tuple[float, float]
    :raises ExperimentError: With fewer than two matched timestamps
    """
    i_est, i_gt = associate(est.t, gt.t, max_dt)
    if len(i_est) < 2:
        raise ExperimentError(
            f"Only {len(i_est)} estimate timestamps match the ground truth"
        )
    T = align_rigid(est.p[i_est], gt.p[i_gt])
    aligned = PoseTrajectory(est.t[i_est], est.R_GI[i_est], est.p[i_est]).transformed(T)

    pos_err = np.linalg.norm(aligned.p - gt.p[i_gt], axis=1)
    rot_err = np.array(
        [rotation_angle(Re @ Rg.T) for Re, Rg in zip(aligned.R_GI, gt.R_GI[i_gt])]
    )
    ate_rot = float(np.degrees(np.sqrt(np.mean(rot_err**2))))
    ate_pos = float(np.sqrt(np.mean(pos_err**2)))
    logger.debug(f"ATE over {len(i_est)} poses: {ate_rot:.4f} deg, {ate_pos:.5f} m")
    return ate_rot, ate_pos


def imu_error(
    R_true: np.ndarray,
    p_true: np.ndarray,
    v_true: np.ndarray,
    bg_true: np.ndarray,
    ba_true: np.ndarray,
    imu_est,
) -> np.ndarray:
    """15-dim error ``(attitude, position, velocity, gyro bias, accel bias)``."""
    return np.concatenate(
        [
            attitude_error(R_true, imu_est.R_GI),
            p_true - imu_est.p_GI,
            v_true - imu_est.v_GI,
            bg_true - imu_est.bg,
            ba_true - imu_est.ba,
        ]
    )


def nees(error: np.ndarray, P: np.ndarray) -> float:
    """Normalized estimation error squared ``e^T P^-1 e``."""
    error = np.asarray(error, dtype=float)
    return float(error @ np.linalg.solve(P, error))


@dataclass(frozen=True)
class InitEvaluation:
    """Error and latency of one relocalization."""

    rot_deg: float
    pos_cm: float
    seconds: float


def eval_init(m: MlpModel, samples: Sequence[TrainSample]) -> List[InitEvaluation]:
    """
    Relocalize each held-out image and compare with its label.

    :param MlpModel m: Preloaded model
    :param samples: Images with ground-truth ``T_W_C``
    :type samples: Sequence[TrainSample]
    :return: One evaluation per image
    :rtype: List[InitEvaluation]
    """
    out = []
    for sample in samples:
        pose, seconds = timed_relocalize(m, sample.image)
        rot_deg, pos_m = pose_errors(pose, sample.gt_pose)
        out.append(InitEvaluation(rot_deg, 100.0 * pos_m, seconds))
    if out:
        logger.info(
            f"Initialization over {len(out)} images: median "
            f"{np.median([e.rot_deg for e in out]):.3f} deg, "
            f"{np.median([e.pos_cm for e in out]):.3f} cm"
        )
    return out
