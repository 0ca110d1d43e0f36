"""
Synthetic desk-scale world.

A camera-carrying IMU orbits a table while looking at a point above its
center. The trajectory is analytic, so poses, velocities, accelerations and
angular rates are exact at any time. IMU readings are obtained by inverting
the strapdown model and adding white noise and random-walk biases; camera
observations are pinhole projections of table and wall landmarks.

The global frame is z-up with gravity ``(0, 0, -9.81)``; the IMU frame is
x-forward, y-left, z-up.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..estimation import (
    DEFAULT_GRAVITY,
    CameraCalibration,
    ImuSample,
    Intrinsics,
    NoiseParams,
)
from ..exceptions import ConfigValidationError
from ..geometry import Pose

logger = logging.getLogger(__name__)

# Seed-sequence stream tags; each random stream is derived from (seed, tag).
STREAM_SCENE = 0
STREAM_IMU = 1
STREAM_CAMERA = 2
STREAM_RENDER = 3
STREAM_INIT = 4

MIN_VISIBLE_DEPTH = 0.1


def stream_rng(seed: int, stream: int) -> np.random.Generator:
    """Independent generator for one random stream of a seeded run."""
    return np.random.default_rng([int(seed), int(stream)])


@dataclass(frozen=True)
class TrajectorySpec:
    """
    Orbit around the scene center.

    :ivar float radius: Orbit radius, m
    :ivar float height: Mean IMU height, m
    :ivar float angular_rate: Orbit rate after the ramp, rad/s
    :ivar float bob_amplitude: Vertical oscillation amplitude, m
    :ivar int bob_cycles: Vertical oscillations per revolution
    :ivar float duration: Length of the run, s
    :ivar float start_azimuth: Azimuth of the first pose, rad
    :ivar float stationary_time: Initial time at rest, s
    :ivar float ramp_time: Smooth ramp from rest to the orbit rate, s
    :ivar float target_height: Height of the look-at point, m
    :ivar int seed: Scene seed
    """

    radius: float = 1.5
    height: float = 0.5
    angular_rate: float = 0.2
    bob_amplitude: float = 0.05
    bob_cycles: int = 3
    duration: float = 30.0
    start_azimuth: float = 0.0
    stationary_time: float = 1.0
    ramp_time: float = 2.0
    target_height: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.radius <= 0.0:
            raise ConfigValidationError(f"Orbit radius {self.radius} must be > 0")
        if self.duration <= 0.0:
            raise ConfigValidationError(f"Duration {self.duration} must be > 0")
        if self.stationary_time < 0.0 or self.ramp_time < 0.0:
            raise ConfigValidationError("Stationary and ramp times must be >= 0")
        if self.height - self.bob_amplitude <= self.target_height:
            raise ConfigValidationError("Camera must stay above the look-at point")


def _rot_z(a):
    c, s = np.cos(a), np.sin(a)
    out = np.zeros(np.shape(a) + (3, 3))
    out[..., 0, 0], out[..., 0, 1] = c, -s
    out[..., 1, 0], out[..., 1, 1] = s, c
    out[..., 2, 2] = 1.0
    return out


def _rot_y(a):
    c, s = np.cos(a), np.sin(a)
    out = np.zeros(np.shape(a) + (3, 3))
    out[..., 0, 0], out[..., 0, 2] = c, s
    out[..., 2, 0], out[..., 2, 2] = -s, c
    out[..., 1, 1] = 1.0
    return out


class Trajectory:
    """
    Analytic orbit with a quintic start-up ramp.

    The azimuth is ``phi0 + rate * g(t)`` where the time warp ``g`` is zero
    while stationary, follows ``T_r (tau^6 - 3 tau^5 + 2.5 tau^4)`` during the
    ramp and is linear afterwards, so position is twice continuously
    differentiable.
    """

    def __init__(self, spec: TrajectorySpec):
        self.spec = spec

    def _warp(self, t):
        s = self.spec
        tp = np.asarray(t, dtype=float) - s.stationary_time
        g, g1, g2 = np.zeros_like(tp), np.zeros_like(tp), np.zeros_like(tp)
        if s.ramp_time > 0.0:
            ramp = (tp > 0.0) & (tp < s.ramp_time)
            tau = tp[ramp] / s.ramp_time
            g[ramp] = s.ramp_time * (tau**6 - 3.0 * tau**5 + 2.5 * tau**4)
            g1[ramp] = 6.0 * tau**5 - 15.0 * tau**4 + 10.0 * tau**3
            g2[ramp] = (30.0 * tau**4 - 60.0 * tau**3 + 30.0 * tau**2) / s.ramp_time
        after = tp >= s.ramp_time
        g[after] = 0.5 * s.ramp_time + (tp[after] - s.ramp_time)
        g1[after] = 1.0
        return g, g1, g2

    def kinematics(self, t) -> Dict[str, np.ndarray]:
        """
        Evaluate the trajectory at one or many times.

        :param t: Time or array of times, s
        :return: Dict with ``R_WI`` (IMU-to-global rotations), ``p``, ``v``,
            ``a`` (global frame) and ``omega_I`` (body angular rate)
        :rtype: Dict[str, np.ndarray]
        """
        s = self.spec
        t = np.atleast_1d(np.asarray(t, dtype=float))
        g, g1, g2 = self._warp(t)
        dphi = s.angular_rate * g
        phi = s.start_azimuth + dphi
        phi1 = s.angular_rate * g1
        phi2 = s.angular_rate * g2

        k, A = s.bob_cycles, s.bob_amplitude
        z = s.height + A * np.sin(k * dphi)
        z1 = A * k * np.cos(k * dphi) * phi1
        z2 = A * k * (np.cos(k * dphi) * phi2 - k * np.sin(k * dphi) * phi1**2)

        c, sn = np.cos(phi), np.sin(phi)
        r = s.radius
        p = np.stack([r * c, r * sn, z], axis=-1)
        v = np.stack([-r * sn * phi1, r * c * phi1, z1], axis=-1)
        a = np.stack(
            [
                -r * c * phi1**2 - r * sn * phi2,
                -r * sn * phi1**2 + r * c * phi2,
                z2,
            ],
            axis=-1,
        )

        dz = s.target_height - z
        beta = -np.arctan2(dz, r)
        beta1 = r * z1 / (r * r + dz * dz)
        psi = phi + np.pi
        R_WI = _rot_z(psi) @ _rot_y(beta)

        e_y = np.stack([-np.sin(psi), np.cos(psi), np.zeros_like(psi)], axis=-1)
        omega_W = beta1[:, None] * e_y
        omega_W[:, 2] += phi1
        omega_I = np.einsum("nji,nj->ni", R_WI, omega_W)
        return {"R_WI": R_WI, "p": p, "v": v, "a": a, "omega_I": omega_I}

    def imu_pose(self, t: float) -> Tuple[np.ndarray, np.ndarray]:
        """``(R_GI, p_GI)`` at time ``t``."""
        kin = self.kinematics(t)
        return kin["R_WI"][0].T, kin["p"][0]


@dataclass
class GroundTruth:
    """
    Trajectory sampled at the IMU rate.

    :ivar np.ndarray t: (N,) timestamps
    :ivar np.ndarray R_GI: (N, 3, 3) global-to-IMU rotations
    :ivar np.ndarray p: (N, 3) positions
    :ivar np.ndarray v: (N, 3) velocities
    :ivar np.ndarray a: (N, 3) accelerations
    :ivar np.ndarray omega_I: (N, 3) body angular rates
    :ivar np.ndarray bg: (N, 3) gyro biases
    :ivar np.ndarray ba: (N, 3) accel biases
    :ivar Trajectory trajectory: Analytic source
    """

    t: np.ndarray
    R_GI: np.ndarray
    p: np.ndarray
    v: np.ndarray
    a: np.ndarray
    omega_I: np.ndarray
    bg: np.ndarray
    ba: np.ndarray
    trajectory: Trajectory

    def __len__(self) -> int:
        return len(self.t)

    def camera_pose(self, t: float, calib: CameraCalibration) -> Pose:
        """``T_W_C``: world-to-camera pose at IMU time ``t``."""
        R_GI, p_GI = self.trajectory.imu_pose(t)
        R_GC = calib.R_IC @ R_GI
        return Pose(R_GC, calib.p_CI - R_GC @ p_GI)

    def bias_at(self, t: float) -> Tuple[np.ndarray, np.ndarray]:
        """Biases at the last IMU sample not after ``t``."""
        k = int(np.clip(np.searchsorted(self.t, t, side="right") - 1, 0, len(self.t) - 1))
        return self.bg[k], self.ba[k]


def generate_truth(spec: TrajectorySpec, imu_rate: float = 200.0) -> GroundTruth:
    """
    Sample the analytic trajectory at the IMU rate.

    :param TrajectorySpec spec: Trajectory parameters
    :param float imu_rate: Sampling rate, Hz
    :return: Ground truth with zero biases
    :rtype: GroundTruth
    """
    if imu_rate <= 0.0:
        raise ConfigValidationError(f"IMU rate {imu_rate} must be > 0")
    n = int(round(spec.duration * imu_rate)) + 1
    t = np.arange(n) / imu_rate
    traj = Trajectory(spec)
    kin = traj.kinematics(t)
    zeros = np.zeros((n, 3))
    logger.debug(f"Generated {n} ground-truth samples over {spec.duration} s")
    return GroundTruth(
        t=t,
        R_GI=np.transpose(kin["R_WI"], (0, 2, 1)),
        p=kin["p"],
        v=kin["v"],
        a=kin["a"],
        omega_I=kin["omega_I"],
        bg=zeros.copy(),
        ba=zeros.copy(),
        trajectory=traj,
    )


def synthesize_imu(
    gt: GroundTruth,
    noise: Optional[NoiseParams],
    seed: int,
    gravity: np.ndarray = DEFAULT_GRAVITY,
) -> List[ImuSample]:
    """
    IMU readings from ground truth.

    ``omega_m = omega_I + b_g + n_g`` and ``a_m = R_GI (a - g) + b_a + n_a``
    with discrete white noise ``sigma / sqrt(dt)`` and biases integrating
    ``sigma_w sqrt(dt)`` steps. The true biases are written back into ``gt``.

    :param GroundTruth gt: Ground truth, biases overwritten
    :param noise: Noise densities, ``None`` for exact readings
    :type noise: Optional[NoiseParams]
    :param int seed: Run seed
    :param np.ndarray gravity: Global gravity vector
    :return: IMU readings at the ground-truth timestamps
    :rtype: List[ImuSample]
    """
    n = len(gt)
    f_I = np.einsum("nij,nj->ni", gt.R_GI, gt.a - np.asarray(gravity, dtype=float))
    omega = gt.omega_I.copy()

    if noise is not None:
        rng = stream_rng(seed, STREAM_IMU)
        dt = float(gt.t[1] - gt.t[0])
        white_g = rng.normal(size=(n, 3)) * noise.sigma_g / math.sqrt(dt)
        white_a = rng.normal(size=(n, 3)) * noise.sigma_a / math.sqrt(dt)
        steps_g = rng.normal(size=(n, 3)) * noise.sigma_wg * math.sqrt(dt)
        steps_a = rng.normal(size=(n, 3)) * noise.sigma_wa * math.sqrt(dt)
        steps_g[0] = 0.0
        steps_a[0] = 0.0
        gt.bg = np.cumsum(steps_g, axis=0)
        gt.ba = np.cumsum(steps_a, axis=0)
        omega = omega + gt.bg + white_g
        f_I = f_I + gt.ba + white_a

    return [ImuSample(float(gt.t[k]), omega[k], f_I[k]) for k in range(n)]


@dataclass
class Scene:
    """
    Landmarks of the world.

    :ivar np.ndarray ids: (N,) integer landmark ids
    :ivar np.ndarray positions: (N, 3) world positions, m
    :ivar np.ndarray amplitudes: (N,) signed blob contrast
    :ivar np.ndarray radii: (N,) blob radius, m
    :ivar float room_half_size: Half side of the square room, m
    """

    ids: np.ndarray
    positions: np.ndarray
    amplitudes: np.ndarray
    radii: np.ndarray
    room_half_size: float = 2.5

    def __len__(self) -> int:
        return len(self.ids)


def generate_scene(
    seed: int,
    n_table: int = 200,
    n_wall: int = 100,
    table_size: float = 1.0,
    room_half_size: float = 2.5,
    wall_height: float = 0.4,
) -> Scene:
    """
    Landmarks on a table plane at ``z = 0`` and on the room walls.

    :param int seed: Scene seed
    :param int n_table: Number of table landmarks
    :param int n_wall: Number of wall landmarks
    :param float table_size: Table side length, m
    :param float room_half_size: Half side of the room, m
    :param float wall_height: Maximum wall landmark height, m
    :return: Scene
    :rtype: Scene
    """
    rng = stream_rng(seed, STREAM_SCENE)
    half = 0.5 * table_size
    table = np.column_stack(
        [rng.uniform(-half, half, size=(n_table, 2)), np.zeros(n_table)]
    )

    wall_idx = rng.integers(0, 4, size=n_wall)
    along = rng.uniform(-room_half_size, room_half_size, size=n_wall)
    heights = rng.uniform(0.02, wall_height, size=n_wall)
    L = room_half_size
    wall = np.empty((n_wall, 3))
    wall[:, 2] = heights
    for side, (x, y) in enumerate(((L, None), (-L, None), (None, L), (None, -L))):
        sel = wall_idx == side
        if x is not None:
            wall[sel, 0], wall[sel, 1] = x, along[sel]
        else:
            wall[sel, 0], wall[sel, 1] = along[sel], y

    n = n_table + n_wall
    signs = np.where(rng.uniform(size=n) < 0.5, -1.0, 1.0)
    amplitudes = signs * rng.uniform(0.25, 0.5, size=n)
    radii = np.concatenate([np.full(n_table, 0.012), np.full(n_wall, 0.03)])
    return Scene(
        ids=np.arange(n),
        positions=np.vstack([table, wall]),
        amplitudes=amplitudes,
        radii=radii,
        room_half_size=room_half_size,
    )


@dataclass
class CameraFrame:
    """
    One captured frame.

    :ivar float t: Camera timestamp, s
    :ivar float t_imu: Exposure time on the IMU clock, ``t - t_d``
    :ivar Dict[int, np.ndarray] observations: Landmark id to pixel coordinates
    """

    t: float
    t_imu: float
    observations: Dict[int, np.ndarray] = field(default_factory=dict)


def visible_landmarks(
    T_W_C: Pose, positions: np.ndarray, intrinsics: Intrinsics
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Indices and exact pixels of landmarks inside the frustum.

    :param Pose T_W_C: World-to-camera pose
    :param np.ndarray positions: (N, 3) world points
    :param Intrinsics intrinsics: Camera intrinsics
    :return: ``(indices, uv)``
    :rtype: Tuple[np.ndarray, np.ndarray]
    """
    p_C = T_W_C.apply(positions)
    front = p_C[:, 2] > MIN_VISIBLE_DEPTH
    idx = np.flatnonzero(front)
    uv = intrinsics.normalized_to_pixel(p_C[idx, :2] / p_C[idx, 2:3])
    inside = intrinsics.in_bounds(uv)
    return idx[inside], uv[inside]


def synthesize_camera(
    gt: GroundTruth,
    scene: Scene,
    intrinsics: Intrinsics,
    rate: float,
    sigma_px: float,
    seed: int,
    calib: CameraCalibration = CameraCalibration(),
    time_offset: float = 0.0,
    positions: Optional[np.ndarray] = None,
) -> List[CameraFrame]:
    """
    Pixel observations of visible landmarks at the camera rate.

    :param GroundTruth gt: Ground truth
    :param Scene scene: Landmarks
    :param Intrinsics intrinsics: Camera intrinsics
    :param float rate: Camera rate, Hz
    :param float sigma_px: Pixel noise, 0 for exact observations
    :param int seed: Run seed
    :param CameraCalibration calib: Camera-IMU extrinsics
    :param float time_offset: ``t_d`` with ``t_imu = t_cam - t_d``
    :param positions: Override of landmark positions (changed world)
    :type positions: Optional[np.ndarray]
    :return: Frames in time order
    :rtype: List[CameraFrame]
    """
    if rate <= 0.0:
        raise ConfigValidationError(f"Camera rate {rate} must be > 0")
    rng = stream_rng(seed, STREAM_CAMERA)
    points = scene.positions if positions is None else positions
    t_end = float(gt.t[-1])

    frames = []
    k = 0
    while k / rate <= t_end + 1e-9:
        t_imu = k / rate
        frame = CameraFrame(t_imu + time_offset, t_imu)
        idx, uv = visible_landmarks(gt.camera_pose(t_imu, calib), points, intrinsics)
        if sigma_px > 0.0:
            uv = uv + rng.normal(size=uv.shape) * sigma_px
        for i, obs in zip(idx, uv):
            frame.observations[int(scene.ids[i])] = obs
        frames.append(frame)
        k += 1
    logger.debug(f"Synthesized {len(frames)} camera frames")
    return frames
