"""
Synthetic training data for the initialization model.

Poses are drawn around the start of the orbit: azimuths uniformly within a
sector centered on the start azimuth, then jittered in camera position and
attitude. Each pose is rendered from the prior map and labeled with its
``T_W_C``.
"""

import logging
from dataclasses import replace
from typing import List, Tuple

import numpy as np

from ..estimation import CameraCalibration
from ..geometry import Pose, so3_exp
from ..prior_map import MapModel, render
from ..sim import Trajectory, TrajectorySpec
from .init_model import TrainSample, preprocess

logger = logging.getLogger(__name__)


def nominal_camera_pose(
    spec: TrajectorySpec, azimuth: float, calib: CameraCalibration
) -> Pose:
    """Camera pose on the orbit at rest at the given azimuth."""
    R_GI, p_GI = Trajectory(replace(spec, start_azimuth=azimuth)).imu_pose(0.0)
    R_GC = calib.R_IC @ R_GI
    return Pose(R_GC, calib.p_CI - R_GC @ p_GI)


def sample_poses(
    spec: TrajectorySpec,
    calib: CameraCalibration,
    n: int,
    sector: float,
    position_jitter: float,
    rotation_jitter: float,
    rng: np.random.Generator,
) -> List[Pose]:
    """
    Random camera poses in the training region.

    :param TrajectorySpec spec: Orbit, its start azimuth centers the sector
    :param CameraCalibration calib: Camera-IMU extrinsics
    :param int n: Number of poses
    :param float sector: Azimuth sector width, rad
    :param float position_jitter: Per-axis camera-center standard deviation, m
    :param float rotation_jitter: Per-axis attitude standard deviation, rad
    :param np.random.Generator rng: Random source
    :return: ``T_W_C`` poses
    :rtype: List[Pose]
    """
    poses = []
    for _ in range(n):
        azimuth = spec.start_azimuth + rng.uniform(-0.5 * sector, 0.5 * sector)
        nominal = nominal_camera_pose(spec, azimuth, calib)
        center = -nominal.rotation.T @ nominal.translation
        center = center + rng.normal(scale=position_jitter, size=3)
        R = so3_exp(rng.normal(scale=rotation_jitter, size=3)) @ nominal.rotation
        poses.append(Pose(R, -R @ center))
    return poses


def build_dataset(
    map_model: MapModel, poses: List[Pose], input_size: Tuple[int, int]
) -> List[TrainSample]:
    """Render and preprocess one training sample per pose."""
    samples = [
        TrainSample(preprocess(render(map_model, T).data, input_size), T) for T in poses
    ]
    logger.info(f"Rendered {len(samples)} training samples at {input_size}")
    return samples
