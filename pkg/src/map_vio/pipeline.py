"""
Two-stage filter event loop.

IMU readings, captured frames, render requests and render deliveries are
merged into one queue ordered by IMU-clock time and then by event type, so a
run is a pure function of its configuration and seed. Renders run on worker
threads; their results re-enter the queue at the scheduled delivery time.
"""

import heapq
import logging
import math
from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .estimation import (
    CAPTURED,
    DEFAULT_GRAVITY,
    RENDERED,
    FeatureTrack,
    FilterState,
    ImuSample,
    ImuState,
    UpdateConfig,
    UpdateReport,
    captured_update,
    clone_state,
    error_state_jacobians,
    initial_covariance,
    interpolate_sample,
    marginalize,
    propagate_covariance,
    propagate_mean,
    rendered_update,
    select_closest_clone,
)
from .exceptions import (
    ConfigValidationError,
    ExperimentError,
    MapVioError,
    UpdateError,
)
from .geometry import Pose, rotation_angle, so3_exp
from .learning import (
    MlpModel,
    compose_first_imu,
    frame_covariance,
    init_from_pose,
    preprocess,
    timed_relocalize,
)
from .metrics import PoseTrajectory, imu_error, nees
from .prior_map import (
    altered_cells,
    associate_corners,
    board_mask,
    fast_detect,
    render,
    render_frame,
    schedule_renders,
    ssim_grid_filter,
    visible_in_cells,
)
from .scenario import Scenario
from .sim import stream_rng
from .sim.world import STREAM_INIT

logger = logging.getLogger(__name__)

IMU_EVENT = 0
CAMERA_EVENT = 1
RENDER_REQUEST = 2
RENDER_DELIVERY = 3
EVENT_NAMES = {
    IMU_EVENT: "IMU",
    CAMERA_EVENT: "camera",
    RENDER_REQUEST: "render request",
    RENDER_DELIVERY: "render delivery",
}

TIME_EPS = 1e-9
# FAST needs a full circle around a corner
RENDER_MARGIN = 3.0

GROUND_TRUTH = "ground-truth"
PERTURBED = "perturbed"
LEARNED = "learned"

# Initial IMU variances; attitude and position are small because the filter's
# global frame is the first estimated IMU pose.
INITIAL_ATTITUDE_VAR = 1e-8
INITIAL_POSITION_VAR = 1e-8
INITIAL_VELOCITY_VAR = 1e-6


@dataclass(order=True)
class Event:
    t: float
    priority: int
    seq: int
    payload: object = field(default=None, compare=False)


@dataclass(frozen=True)
class FilterSettings:
    """
    Event-loop options taken from the ``Filter`` and ``PriorMap`` sections.

    :ivar bool map_updates: Run the rendered pipeline
    :ivar int max_clones: Clone window capacity
    :ivar int max_features: Per-frame feature budget, shared by both sources
    :ivar UpdateConfig update: Measurement model
    :ivar np.ndarray Q: 12x12 continuous IMU noise
    :ivar bool check_covariance: Validate covariances while propagating
    :ivar float camera_rate: Camera rate, Hz
    :ivar float render_rate: Render request rate, Hz
    :ivar Tuple[int, int] grid: SSIM grid
    :ivar float ssim_threshold: Minimum SSIM of an accepted cell
    :ivar float fast_threshold: FAST intensity threshold
    :ivar float association_radius: Corner association radius, px
    :ivar int workers: Render worker threads
    """

    map_updates: bool
    max_clones: int
    max_features: int
    update: UpdateConfig
    Q: np.ndarray
    check_covariance: bool
    camera_rate: float
    render_rate: float
    grid: Tuple[int, int]
    ssim_threshold: float
    fast_threshold: float
    association_radius: float
    workers: int = 1

    @classmethod
    def from_config(
        cls, app_config: Dict, scenario: Scenario, map_updates: Optional[bool] = None
    ) -> "FilterSettings":
        f = app_config["Filter"]
        prior = app_config["PriorMap"]
        return cls(
            map_updates=f["MapUpdates"] if map_updates is None else map_updates,
            max_clones=f["MaxClones"],
            max_features=f["MaxFeaturesPerFrame"],
            update=UpdateConfig(
                intrinsics=scenario.intrinsics,
                sigma_px=scenario.noise.sigma_px,
                sigma_r=scenario.noise.sigma_r,
                chi2_confidence=f["Chi2Confidence"],
                check_covariance=f["CheckCovariance"],
            ),
            Q=scenario.noise.continuous_covariance(),
            check_covariance=f["CheckCovariance"],
            camera_rate=app_config["Camera"]["Rate"],
            render_rate=prior["RenderRate"],
            grid=tuple(prior["Grid"]),
            ssim_threshold=prior["SsimThreshold"],
            fast_threshold=prior["FastThreshold"],
            association_radius=prior["AssociationRadius"],
            workers=app_config["General"]["Workers"],
        )


@dataclass
class FilterInit:
    """
    Filter state at the first camera frame and how good it is.

    :ivar FilterState fs: Initial mean
    :ivar np.ndarray P: Initial covariance
    :ivar int start_frame: Index of the first processed camera frame
    :ivar float rot_deg: Attitude error of the initial pose, degrees
    :ivar float pos_cm: Position error of the initial pose, cm
    :ivar float seconds: Relocalization latency, learned mode only
    """

    fs: FilterState
    P: np.ndarray
    start_frame: int
    rot_deg: float = 0.0
    pos_cm: float = 0.0
    seconds: float = 0.0


@dataclass
class RenderDelivery:
    """
    Bookkeeping of one consumed render.

    :ivar float request_ts: Time the render was requested
    :ivar float clone_ts: Clone the rendered features were attached to
    :ivar np.ndarray accepted: SSIM grid cells that passed the filter
    :ivar np.ndarray altered: Grid cells mostly covered by a changed region in
        the captured image
    :ivar List[int] landmark_ids: Landmarks handed to the rendered update
    :ivar np.ndarray corners: (K, 2) rendered corners of those landmarks
    """

    request_ts: float
    clone_ts: float
    accepted: np.ndarray
    altered: np.ndarray
    landmark_ids: List[int] = field(default_factory=list)
    corners: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))


@dataclass
class RunLog:
    """Everything the event loop records."""

    t: List[float] = field(default_factory=list)
    R_GI: List[np.ndarray] = field(default_factory=list)
    p: List[np.ndarray] = field(default_factory=list)
    nees: List[float] = field(default_factory=list)
    reports: List[UpdateReport] = field(default_factory=list)
    n_rendered_features: int = 0
    n_rejected_cells: int = 0
    deliveries: List[RenderDelivery] = field(default_factory=list)

    def trajectory(self) -> PoseTrajectory:
        return PoseTrajectory(
            np.array(self.t), np.array(self.R_GI).reshape(-1, 3, 3), np.array(self.p)
        )


def start_frame_index(scenario: Scenario, stationary_time: float) -> int:
    """First frame exposed at or after half the stationary period."""
    for k, frame in enumerate(scenario.frames):
        if frame.t_imu >= 0.5 * stationary_time - TIME_EPS:
            return k
    raise ConfigValidationError("No camera frame after the stationary start")


def stationary_window(scenario: Scenario, t0: float) -> List[ImuSample]:
    return [s for s in scenario.imu if s.t <= t0 + TIME_EPS]


def _perturb_imu_pose(
    R_GI: np.ndarray, p: np.ndarray, sigma_rot: float, sigma_pos: float, rng
) -> Pose:
    R = so3_exp(rng.normal(scale=sigma_rot, size=3)) @ R_GI
    p = p + rng.normal(scale=sigma_pos, size=3)
    return Pose(R, -R @ p)


def initialize_filter(
    scenario: Scenario,
    app_config: Dict,
    model: Optional[MlpModel] = None,
    gravity: np.ndarray = DEFAULT_GRAVITY,
) -> FilterInit:
    """
    Build the filter state at the first camera frame.

    ``ground-truth`` copies the true state and leaves the map frame exact.
    ``perturbed`` draws a seeded per-axis attitude and position error and
    ``learned`` relocalizes the image seen from the true first pose. Both then
    gravity-align the pose, bootstrap velocity and biases from the stationary
    window and take the map-frame covariance from the perturbation or the
    model's validation variance.

    :param Scenario scenario: Run inputs
    :param dict app_config: Canonical configuration
    :param model: Preloaded initialization model, required in learned mode
    :type model: Optional[MlpModel]
    :param np.ndarray gravity: Gravity in the global frame
    :return: Initial filter state
    :rtype: FilterInit
    :raises ConfigValidationError: If learned mode has no model
    :raises ModelError: If the bootstrap fails
    """
    f = app_config["Filter"]
    mode = f["InitMode"]
    k0 = start_frame_index(scenario, app_config["Scenario"]["StationaryTime"])
    frame = scenario.frames[k0]
    t0 = frame.t_imu

    kin = scenario.truth.trajectory.kinematics(t0)
    R_true, p_true, v_true = kin["R_WI"][0].T, kin["p"][0], kin["v"][0]
    bg_true, ba_true = scenario.truth.bias_at(t0)
    window = stationary_window(scenario, t0)
    seconds = 0.0

    if mode == GROUND_TRUTH:
        imu = ImuState(R_true, p_true, v_true, bg_true, ba_true)
        Sigma = np.zeros((6, 6))
    else:
        if mode == PERTURBED:
            var_rot = math.radians(f["PerturbRotationDeg"]) ** 2
            var_pos = (0.01 * f["PerturbPositionCm"]) ** 2
            T_W_I0 = _perturb_imu_pose(
                R_true,
                p_true,
                math.sqrt(var_rot),
                math.sqrt(var_pos),
                stream_rng(scenario.seed, STREAM_INIT),
            )
        elif mode == LEARNED:
            if model is None:
                raise ConfigValidationError("Learned initialization needs a model")
            image = render(scenario.world, scenario.camera_pose(t0))
            T_W_C0, seconds = timed_relocalize(
                model, preprocess(image.data, model.input_size)
            )
            calib = scenario.calib
            T_C0_I0 = Pose(calib.R_IC.T, -calib.R_IC.T @ calib.p_CI)
            T_W_I0 = compose_first_imu(T_W_C0, T_C0_I0)
            var_rot = float(np.mean(model.val_variance[:3]))
            var_pos = float(np.mean(model.val_variance[3:]))
        else:
            raise ConfigValidationError(f"Unknown initialization mode '{mode}'")
        init = init_from_pose(T_W_I0, window, gravity)
        R = init.T_W_I0.rotation
        imu = ImuState(R, -R.T @ init.T_W_I0.translation, init.v0, init.bg0, init.ba0)
        Sigma = frame_covariance(imu.p_GI, var_rot, var_pos)

    rot_deg = math.degrees(rotation_angle(imu.R_GI @ R_true.T))
    pos_cm = 100.0 * float(np.linalg.norm(imu.p_GI - p_true))
    logger.info(
        f"Initialized ({mode}) at t={t0:.3f}: {rot_deg:.3f} deg, {pos_cm:.3f} cm"
    )

    fs = FilterState(
        imu=imu,
        timestamp=t0,
        calib=scenario.calib,
        t_d=frame.t - frame.t_imu,
        T_W_G=Pose.identity(),
        Sigma_init=Sigma,
        max_clones=f["MaxClones"],
    )
    P = initial_covariance(
        attitude=INITIAL_ATTITUDE_VAR,
        position=INITIAL_POSITION_VAR,
        velocity=INITIAL_VELOCITY_VAR,
    )
    return FilterInit(fs, P, k0, rot_deg, pos_cm, seconds)


class TwoStageFilter:
    """
    Sliding-window filter driven by the virtual-time event queue.

    Captured tracks update the window when they are lost or when they reach
    the oldest clone of a full window. With map updates on, renders are
    requested at the latest clone's pose; on delivery the closest clone's
    captured observations are paired with map landmarks detected in the
    rendered image, inside cells where rendered and captured images agree.
    """

    def __init__(
        self,
        scenario: Scenario,
        settings: FilterSettings,
        init: FilterInit,
        record_nees: bool = False,
        gravity: np.ndarray = DEFAULT_GRAVITY,
    ):
        self.scenario = scenario
        self.settings = settings
        self.gravity = np.asarray(gravity, dtype=float)
        self.record_nees = record_nees
        self.fs = init.fs
        self.P = init.P
        self.log = RunLog()

        self.tracks: Dict[int, FeatureTrack] = {}
        self._frame_obs: Dict[float, Dict[int, np.ndarray]] = {}
        self._imu_t = np.array([s.t for s in scenario.imu])
        self._queue: List[Event] = []
        self._seq = 0
        self._executor: Optional[Executor] = None

        t0 = init.fs.timestamp
        k = int(np.searchsorted(self._imu_t, t0 + TIME_EPS, side="right")) - 1
        if abs(self._imu_t[k] - t0) <= TIME_EPS:
            self._last = scenario.imu[k]
        else:
            self._last = interpolate_sample(scenario.imu[k], scenario.imu[k + 1], t0)

        for j in range(k + 1, len(scenario.imu)):
            self._push(scenario.imu[j].t, IMU_EVENT, j)
        for frame in scenario.frames[init.start_frame :]:
            self._push(frame.t_imu, CAMERA_EVENT, frame)
        if settings.map_updates:
            for event in schedule_renders(
                settings.camera_rate,
                settings.render_rate,
                scenario.map_model.latency,
                float(self._imu_t[-1]),
            ):
                if event.request_ts >= t0 - TIME_EPS:
                    self._push(event.request_ts, RENDER_REQUEST, event)

    def _push(self, t: float, priority: int, payload) -> None:
        heapq.heappush(self._queue, Event(float(t), priority, self._seq, payload))
        self._seq += 1

    def run(self) -> RunLog:
        """
        Drain the event queue.

        :return: Estimated trajectory, NEES and update reports
        :rtype: RunLog
        :raises ExperimentError: On any failure, tagged with the event time
        """
        with ThreadPoolExecutor(max_workers=self.settings.workers) as executor:
            self._executor = executor
            while self._queue:
                event = heapq.heappop(self._queue)
                try:
                    self._dispatch(event)
                except ExperimentError:
                    raise
                except MapVioError as e:
                    raise ExperimentError(
                        f"{EVENT_NAMES[event.priority]} event failed: {e}", event.t
                    ) from e
        self._executor = None
        logger.debug(
            f"Event loop done: {len(self.log.t)} poses, {len(self.log.reports)} updates"
        )
        return self.log

    def _dispatch(self, event: Event) -> None:
        if event.priority == IMU_EVENT:
            self._step(self._last, self.scenario.imu[event.payload])
        elif event.priority == CAMERA_EVENT:
            self._on_camera(event.payload)
        elif event.priority == RENDER_REQUEST:
            self._on_render_request(event.payload)
        else:
            self._on_render_delivery(*event.payload)

    def _step(self, s0: ImuSample, s1: ImuSample) -> None:
        dt = s1.t - s0.t
        if dt <= TIME_EPS:
            return
        F, G = error_state_jacobians(self.fs.imu, s0)
        self.P = propagate_covariance(
            self.P, F, G, self.settings.Q, dt, check=self.settings.check_covariance
        )
        self.fs.imu = propagate_mean(self.fs.imu, (s0, s1), self.gravity)
        self.fs.timestamp = s1.t
        self._last = s1

    def _propagate_to(self, t: float) -> None:
        if t - self._last.t <= TIME_EPS:
            return
        k = int(np.searchsorted(self._imu_t, t, side="left"))
        if k >= len(self._imu_t):
            raise ExperimentError("Camera frame after the last IMU reading", t)
        self._step(self._last, interpolate_sample(self._last, self.scenario.imu[k], t))

    def _select_tracks(self, frame) -> List[FeatureTrack]:
        ids = sorted(frame.observations)
        existing = [i for i in ids if i in self.tracks]
        new = [i for i in ids if i not in self.tracks]
        selected = (existing + new)[: self.settings.max_features]
        chosen = set(selected)
        lost = [self.tracks.pop(i) for i in sorted(self.tracks) if i not in chosen]
        for i in selected:
            track = self.tracks.setdefault(i, FeatureTrack(i, CAPTURED))
            track.add(frame.t, frame.observations[i])
        return lost

    def _on_camera(self, frame) -> None:
        self._propagate_to(frame.t_imu)
        self.fs, self.P = clone_state(self.fs, self.P, frame.t)
        self._frame_obs[frame.t] = frame.observations
        update = self._select_tracks(frame)

        full = len(self.fs.clones) >= self.fs.max_clones
        if full:
            oldest = self.fs.clones[0].timestamp
            aging = [i for i, tr in self.tracks.items() if tr.obs[0][0] == oldest]
            update += [self.tracks.pop(i) for i in sorted(aging)]

        update = sorted((tr for tr in update if len(tr) >= 2), key=lambda tr: tr.id)
        if update:
            self.fs, self.P, report = captured_update(
                self.fs, self.P, update, self.settings.update
            )
            self.log.reports.append(report)

        if full:
            self.fs, self.P = marginalize(self.fs, self.P)
            self._frame_obs.pop(oldest, None)
        self._record(frame.t_imu)

    def _record(self, t: float) -> None:
        imu = self.fs.imu
        self.log.t.append(t)
        self.log.R_GI.append(imu.R_GI.copy())
        self.log.p.append(imu.p_GI.copy())
        if not self.record_nees:
            self.log.nees.append(float("nan"))
            return
        kin = self.scenario.truth.trajectory.kinematics(t)
        bg, ba = self.scenario.truth.bias_at(t)
        error = imu_error(kin["R_WI"][0].T, kin["p"][0], kin["v"][0], bg, ba, imu)
        self.log.nees.append(nees(error, self.P[:15, :15]))

    def _on_render_request(self, event) -> None:
        if not self.fs.clones:
            return
        T_W_C = self.fs.clones[-1].camera_pose(self.fs.calib) @ self.fs.T_W_G
        future = self._executor.submit(
            render_frame,
            self.scenario.map_model,
            T_W_C,
            event.request_ts,
            RENDER_MARGIN,
        )
        self._push(event.delivery_ts, RENDER_DELIVERY, (event, future))

    def _on_render_delivery(self, event, future) -> None:
        rendered = future.result()
        try:
            cc_ts = select_closest_clone(self.fs, event.request_ts + self.fs.t_d)
        except UpdateError:
            logger.debug(f"No clone left for the render at t={event.request_ts:.3f}")
            return

        s = self.settings
        T_true = self.scenario.camera_pose(cc_ts - self.fs.t_d)
        captured = render(self.scenario.world, T_true)
        accepted, _ = ssim_grid_filter(
            rendered.image, captured, s.grid, s.ssim_threshold
        )
        self.log.n_rejected_cells += int(np.count_nonzero(~accepted))

        corners, _ = fast_detect(rendered.image, s.fast_threshold)
        corners = corners[visible_in_cells(corners, accepted, rendered.image.shape)]
        pairs = associate_corners(
            corners, rendered.visible_ids, rendered.visible_uv, s.association_radius
        )

        observed = self._frame_obs.get(cc_ts, {})
        map_model = self.scenario.map_model
        tracks, used = [], []
        for landmark_id, corner in pairs:
            if landmark_id not in observed:
                continue
            anchor = map_model.positions[map_model.index_of(landmark_id)]
            track = FeatureTrack(landmark_id, RENDERED, anchor_W=np.array(anchor))
            track.add(cc_ts, observed[landmark_id])
            tracks.append(track)
            used.append(corner)
            if len(tracks) >= s.max_features:
                break

        self.log.deliveries.append(
            RenderDelivery(
                event.request_ts,
                cc_ts,
                accepted,
                altered_cells(board_mask(self.scenario.world, T_true), s.grid),
                [track.id for track in tracks],
                np.array(used, dtype=float).reshape(-1, 2),
            )
        )

        logger.debug(
            f"Render from t={event.request_ts:.3f}: {len(corners)} corners in "
            f"accepted cells, {len(tracks)} rendered features at clone {cc_ts:.3f}"
        )
        if not tracks:
            return
        self.log.n_rendered_features += len(tracks)
        self.fs, self.P, report = rendered_update(self.fs, self.P, tracks, s.update)
        self.log.reports.append(report)
