"""
Experiment scenario assembly.

Turns the ``Scenario``, ``Camera``, ``Noise`` and ``PriorMap`` sections of an
experiment configuration into ground truth, sensor streams and the prior
map for one seed.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from .estimation import (
    CameraCalibration,
    ImuSample,
    Intrinsics,
    NoiseParams,
)
from .geometry import Pose
from .prior_map import ChangeRegion, MapModel, board_mask, load_map
from .sim import (
    CameraFrame,
    GroundTruth,
    TrajectorySpec,
    generate_scene,
    generate_truth,
    synthesize_camera,
    synthesize_imu,
)

logger = logging.getLogger(__name__)


@dataclass
class Scenario:
    """
    Everything one seeded run consumes.

    :ivar int seed: Run seed
    :ivar TrajectorySpec spec: Orbit
    :ivar GroundTruth truth: Ground truth with the true biases
    :ivar List[ImuSample] imu: IMU readings
    :ivar List[CameraFrame] frames: Captured observations, occluded ones removed
    :ivar Intrinsics intrinsics: Camera intrinsics
    :ivar CameraCalibration calib: Camera-IMU extrinsics
    :ivar MapModel map_model: Prior map
    :ivar MapModel world: Scene as it is when captured
    :ivar NoiseParams noise: Noise model assumed by the filter
    :ivar bool noisy: Whether sensor noise was applied
    """

    seed: int
    spec: TrajectorySpec
    truth: GroundTruth
    imu: List[ImuSample]
    frames: List[CameraFrame]
    intrinsics: Intrinsics
    calib: CameraCalibration
    map_model: MapModel
    world: MapModel
    noise: NoiseParams
    noisy: bool

    def camera_pose(self, t_imu: float) -> Pose:
        """True ``T_W_C`` at an IMU-clock time."""
        return self.truth.camera_pose(t_imu, self.calib)


def trajectory_spec(app_config: Dict, seed: int) -> TrajectorySpec:
    s = app_config["Scenario"]
    return TrajectorySpec(
        radius=s["Radius"],
        height=s["Height"],
        angular_rate=s["AngularRate"],
        bob_amplitude=s["BobAmplitude"],
        bob_cycles=s["BobCycles"],
        duration=s["Duration"],
        start_azimuth=s["StartAzimuth"],
        stationary_time=s["StationaryTime"],
        ramp_time=s["RampTime"],
        seed=seed,
    )


def intrinsics_from_config(app_config: Dict) -> Intrinsics:
    c = app_config["Camera"]
    return Intrinsics(width=c["Width"], height=c["Height"], focal=c["Focal"])


def calibration_from_config(app_config: Dict) -> CameraCalibration:
    return CameraCalibration.from_offset(app_config["Camera"]["Offset"])


def noise_from_config(app_config: Dict) -> NoiseParams:
    n = app_config["Noise"]
    return NoiseParams(
        sigma_g=n["GyroNoise"],
        sigma_a=n["AccelNoise"],
        sigma_wg=n["GyroWalk"],
        sigma_wa=n["AccelWalk"],
        sigma_px=app_config["Camera"]["PixelNoise"],
        sigma_r=app_config["Filter"]["RenderedNoise"],
    )


def change_regions(app_config: Dict) -> tuple:
    s = app_config["Scenario"]
    if not s["EnvironmentChange"]:
        return ()
    return tuple(
        ChangeRegion(r["Lower"], r["Upper"], r["Displacement"]) for r in s["ChangeRegions"]
    )


def build_map(app_config: Dict) -> MapModel:
    """
    Prior map of the configured scene, or the configured map file.

    Every run seed shares the scene drawn from ``Scenario.SceneSeed``.

    :param dict app_config: Experiment configuration
    :return: Map
    :rtype: MapModel
    :raises MapError: If the map file cannot be read
    """
    map_file = app_config["PriorMap"]["MapFile"]
    if map_file:
        logger.info(f"Loading prior map from {map_file}")
        return load_map(map_file)
    s = app_config["Scenario"]
    scene = generate_scene(
        s["SceneSeed"], n_table=s["TableLandmarks"], n_wall=s["WallLandmarks"]
    )
    return MapModel.from_scene(
        scene,
        intrinsics_from_config(app_config),
        latency=app_config["PriorMap"]["Latency"],
        change_regions=change_regions(app_config),
    )


def _remove_occluded(
    frames: List[CameraFrame], world: MapModel, scenario_pose, intrinsics: Intrinsics
) -> int:
    removed = 0
    for frame in frames:
        if not frame.observations:
            continue
        mask = board_mask(world, scenario_pose(frame.t_imu))
        for landmark_id in sorted(frame.observations):
            u, v = np.rint(frame.observations[landmark_id]).astype(int)
            u = int(np.clip(u, 0, intrinsics.width - 1))
            v = int(np.clip(v, 0, intrinsics.height - 1))
            if mask[v, u]:
                del frame.observations[landmark_id]
                removed += 1
    return removed


def build_scenario(
    app_config: Dict, seed: int, map_model: Optional[MapModel] = None
) -> Scenario:
    """
    Ground truth, sensor streams and maps of one seeded run.

    Captured and two-stage runs of the same seed get identical streams.

    :param dict app_config: Canonical experiment configuration
    :param int seed: Run seed
    :param map_model: Prior map to reuse, built from the config if omitted
    :type map_model: Optional[MapModel]
    :return: Scenario
    :rtype: Scenario
    """
    spec = trajectory_spec(app_config, seed)
    truth = generate_truth(spec, app_config["Scenario"]["ImuRate"])
    noise = noise_from_config(app_config)
    noisy = bool(app_config["Noise"]["Enabled"])
    imu = synthesize_imu(truth, noise if noisy else None, seed)

    intrinsics = intrinsics_from_config(app_config)
    calib = calibration_from_config(app_config)
    if map_model is None:
        map_model = build_map(app_config)
    world = map_model.changed_world() if map_model.change_regions else map_model

    camera = app_config["Camera"]
    frames = synthesize_camera(
        truth,
        world,
        intrinsics,
        camera["Rate"],
        camera["PixelNoise"] if noisy else 0.0,
        seed,
        calib=calib,
        time_offset=camera["TimeOffset"],
        positions=world.positions,
    )
    if world.boards:
        removed = _remove_occluded(
            frames, world, lambda t: truth.camera_pose(t, calib), intrinsics
        )
        logger.info(f"Removed {removed} captured observations hidden under boards")

    logger.debug(
        f"Scenario seed {seed}: {len(imu)} IMU samples, {len(frames)} frames, "
        f"{len(map_model)} landmarks"
    )
    return Scenario(
        seed=seed,
        spec=spec,
        truth=truth,
        imu=imu,
        frames=frames,
        intrinsics=intrinsics,
        calib=calib,
        map_model=map_model,
        world=world,
        noise=noise,
        noisy=noisy,
    )
