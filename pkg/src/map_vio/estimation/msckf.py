"""
Sliding-window measurement updates.

Two feature sources update the same window:

- Captured features are tracked across camera frames, triangulated in the
  global frame and used after projecting their residual onto the left
  nullspace of the feature Jacobian.
- Rendered features come from images of the prior map. Their landmark is
  anchored in map coordinates and observed at the clone closest in time to
  the render request. The uncertainty of the map-to-global transform is
  folded into the measurement noise.

All residuals are in normalized image coordinates.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, null_space, qr
from scipy.stats import chi2

from ..exceptions import GeometryError, TriangulationError, UpdateError
from ..geometry import Pose, skew
from .camera import Intrinsics, project, projection_jacobian
from .imu import check_covariance
from .state import FilterState, apply_correction
from .triangulation import TriangulationConfig, triangulate

logger = logging.getLogger(__name__)

CAPTURED = "captured"
RENDERED = "rendered"

EIGENVALUE_FLOOR = 0.0


@dataclass
class FeatureTrack:
    """
    Pixel observations of one landmark across the window.

    :ivar int id: Landmark identifier
    :ivar str source: ``captured`` or ``rendered``
    :ivar list obs: ``(clone timestamp, uv)`` pairs in time order
    :ivar anchor_W: Landmark in prior-map coordinates, rendered tracks only
    """

    id: int
    source: str = CAPTURED
    obs: List[Tuple[float, np.ndarray]] = field(default_factory=list)
    anchor_W: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.source not in (CAPTURED, RENDERED):
            raise UpdateError(f"Unknown feature source '{self.source}'")

    def add(self, clone_ts: float, uv: np.ndarray) -> None:
        self.obs.append((clone_ts, np.asarray(uv, dtype=float)))

    def clone_timestamps(self) -> List[float]:
        return [ts for ts, _ in self.obs]

    def __len__(self) -> int:
        return len(self.obs)


@dataclass
class UpdateReport:
    """
    Outcome of one measurement update.

    :ivar float timestamp: Filter time of the update
    :ivar str source: Feature source
    :ivar int residual_dim: Rows of the stacked, projected residual
    :ivar float chi2: Sum of per-track chi-square statistics of accepted tracks
    :ivar bool accepted: True if at least one track updated the state
    :ivar float post_residual_norm: Norm of the projected residual after the update
    :ivar int n_tracks: Tracks offered to the update
    :ivar int n_rejected: Tracks dropped by the chi-square gate
    :ivar int n_failed: Tracks that could not be triangulated or projected
    :ivar int n_floored: Noise eigenvalues raised to the floor during inflation
    """

    timestamp: float
    source: str
    residual_dim: int = 0
    chi2: float = 0.0
    accepted: bool = False
    post_residual_norm: float = 0.0
    n_tracks: int = 0
    n_rejected: int = 0
    n_failed: int = 0
    n_floored: int = 0

    def as_row(self) -> Dict[str, object]:
        return asdict(self)


@dataclass(frozen=True)
class UpdateConfig:
    """
    Measurement model settings.

    :ivar Intrinsics intrinsics: Camera intrinsics
    :ivar float sigma_px: Captured pixel noise
    :ivar float sigma_r: Rendered pixel noise
    :ivar float chi2_confidence: Gate confidence level
    :ivar bool check_covariance: Assert symmetric PSD covariance after updates
    :ivar TriangulationConfig triangulation: Triangulation thresholds
    """

    intrinsics: Intrinsics = field(default_factory=Intrinsics)
    sigma_px: float = 1.0
    sigma_r: float = 1.0
    chi2_confidence: float = 0.95
    check_covariance: bool = True
    triangulation: Optional[TriangulationConfig] = None

    def triangulation_config(self) -> TriangulationConfig:
        if self.triangulation is not None:
            return self.triangulation
        return TriangulationConfig(focal=self.intrinsics.focal)


@dataclass
class _Linearization:
    track: FeatureTrack
    p_G: np.ndarray
    r: np.ndarray
    H_x: np.ndarray
    H_f: np.ndarray
    noise: np.ndarray
    chi2: float = 0.0


def _clone_views(fs: FilterState, track: FeatureTrack, intrinsics: Intrinsics):
    views = []
    for ts, uv in track.obs:
        c = fs.clones[fs.clone_index(ts)]
        views.append((c.camera_pose(fs.calib), intrinsics.pixel_to_normalized(uv)))
    return views


def measurement_jacobians(
    fs: FilterState, clone_ts: float, p_G: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Prediction and Jacobians of one normalized observation.

    :param FilterState fs: Filter state
    :param float clone_ts: Camera timestamp of the observing clone
    :param np.ndarray p_G: Landmark in the global frame
    :return: ``(z_hat, H_theta, H_p, H_f)``: prediction, clone attitude and
        position blocks and the derivative with respect to ``p_G``
    :rtype: Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]
    """
    c = fs.clones[fs.clone_index(clone_ts)]
    R_IC = fs.calib.R_IC
    d_I = c.R_GI @ (p_G - c.p_GI)
    p_C = R_IC @ d_I + fs.calib.p_CI
    J = projection_jacobian(p_C)
    H_f = J @ R_IC @ c.R_GI
    return project(p_C), J @ R_IC @ skew(d_I), -H_f, H_f


def linearize_track(
    fs: FilterState, track: FeatureTrack, p_G: np.ndarray, intrinsics: Intrinsics
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Stack residuals and Jacobians of a track over its observing clones.

    :param FilterState fs: Filter state
    :param FeatureTrack track: Observations
    :param np.ndarray p_G: Landmark in the global frame
    :param Intrinsics intrinsics: Camera intrinsics
    :return: ``(r, H_x, H_f)`` with shapes ``2n``, ``2n x N`` and ``2n x 3``
    :rtype: Tuple[np.ndarray, np.ndarray, np.ndarray]
    """
    n = len(track.obs)
    r = np.zeros(2 * n)
    H_x = np.zeros((2 * n, fs.covariance_dim))
    H_f = np.zeros((2 * n, 3))
    for k, (ts, uv) in enumerate(track.obs):
        z_hat, H_th, H_p, H_fk = measurement_jacobians(fs, ts, p_G)
        rows = slice(2 * k, 2 * k + 2)
        sl = fs.clone_slice(fs.clone_index(ts))
        r[rows] = intrinsics.pixel_to_normalized(uv) - z_hat
        H_x[rows, sl.start : sl.start + 3] = H_th
        H_x[rows, sl.start + 3 : sl.stop] = H_p
        H_f[rows] = H_fk
    return r, H_x, H_f


def nullspace_project(
    r: np.ndarray, H_x: np.ndarray, H_f: np.ndarray, noise: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Remove the landmark error from a stacked residual.

    :param np.ndarray r: Residual
    :param np.ndarray H_x: State Jacobian
    :param np.ndarray H_f: Landmark Jacobian
    :param np.ndarray noise: Residual covariance
    :return: Projected ``(r, H_x, noise)``
    :rtype: Tuple[np.ndarray, np.ndarray, np.ndarray]
    """
    A = null_space(H_f.T)
    return A.T @ r, A.T @ H_x, A.T @ noise @ A


def _gate(lin: _Linearization, P: np.ndarray, confidence: float) -> bool:
    S = lin.H_x @ P @ lin.H_x.T + lin.noise
    try:
        lin.chi2 = float(lin.r @ cho_solve(cho_factor(S), lin.r))
    except LinAlgError as e:
        raise UpdateError(f"Singular innovation for track {lin.track.id}") from e
    return lin.chi2 < chi2.ppf(confidence, len(lin.r))


def ekf_update(
    fs: FilterState,
    P: np.ndarray,
    H: np.ndarray,
    r: np.ndarray,
    R: np.ndarray,
    check: bool = True,
) -> Tuple[FilterState, np.ndarray]:
    """
    Joseph-form EKF update with QR compression of tall Jacobians.

    :param FilterState fs: Filter state
    :param np.ndarray P: Joint covariance
    :param np.ndarray H: Stacked Jacobian
    :param np.ndarray r: Stacked residual
    :param np.ndarray R: Residual covariance
    :param bool check: Assert the result is symmetric PSD
    :return: Updated ``(fs, P)``
    :rtype: Tuple[FilterState, np.ndarray]
    :raises UpdateError: If the innovation covariance is singular
    """
    if H.shape[0] > H.shape[1]:
        Q1, R1 = qr(H, mode="economic")
        H, r, R = R1, Q1.T @ r, Q1.T @ R @ Q1

    S = H @ P @ H.T + R
    try:
        K = cho_solve(cho_factor(S), H @ P).T
    except LinAlgError as e:
        raise UpdateError("Singular innovation covariance") from e

    dx = K @ r
    IKH = np.eye(P.shape[0]) - K @ H
    P_new = IKH @ P @ IKH.T + K @ R @ K.T
    P_new = 0.5 * (P_new + P_new.T)
    if check:
        check_covariance(P_new)
    return apply_correction(fs, dx), P_new


def _post_residual_norm(
    fs: FilterState, lins: Sequence[_Linearization], intrinsics: Intrinsics
) -> float:
    total = 0.0
    for lin in lins:
        r, _, H_f = linearize_track(fs, lin.track, lin.p_G, intrinsics)
        if lin.H_f is not None and len(lin.track.obs) > 1:
            r = null_space(H_f.T).T @ r
        total += float(r @ r)
    return float(np.sqrt(total))


def _apply_updates(
    fs: FilterState,
    P: np.ndarray,
    lins: List[_Linearization],
    report: UpdateReport,
    config: UpdateConfig,
):
    accepted = []
    for lin in lins:
        if _gate(lin, P, config.chi2_confidence):
            accepted.append(lin)
        else:
            report.n_rejected += 1
            logger.debug(
                f"Gated {lin.track.source} track {lin.track.id} (chi2={lin.chi2:.2f})"
            )

    if not accepted:
        return fs, P, report

    H = np.vstack([lin.H_x for lin in accepted])
    r = np.concatenate([lin.r for lin in accepted])
    dims = [len(lin.r) for lin in accepted]
    R = np.zeros((sum(dims), sum(dims)))
    offset = 0
    for lin, d in zip(accepted, dims):
        R[offset : offset + d, offset : offset + d] = lin.noise
        offset += d

    fs, P = ekf_update(fs, P, H, r, R, check=config.check_covariance)
    report.residual_dim = int(sum(dims))
    report.chi2 = float(sum(lin.chi2 for lin in accepted))
    report.accepted = True
    report.post_residual_norm = _post_residual_norm(fs, accepted, config.intrinsics)
    return fs, P, report


def captured_update(
    fs: FilterState,
    P: np.ndarray,
    tracks: Sequence[FeatureTrack],
    config: UpdateConfig = UpdateConfig(),
) -> Tuple[FilterState, np.ndarray, UpdateReport]:
    """
    Update the window with captured feature tracks.

    Each track is triangulated from its clones, linearized and projected
    onto the left nullspace of its landmark Jacobian. Tracks failing the
    chi-square gate are dropped; the rest update the state jointly.

    :param FilterState fs: Filter state
    :param np.ndarray P: Joint covariance
    :param tracks: Captured tracks with at least two observations each
    :type tracks: Sequence[FeatureTrack]
    :param UpdateConfig config: Measurement model
    :return: ``(fs, P, report)``
    :rtype: Tuple[FilterState, np.ndarray, UpdateReport]
    :raises UpdateError: On a singular innovation
    """
    report = UpdateReport(fs.timestamp, CAPTURED, n_tracks=len(tracks))
    sigma = config.sigma_px / config.intrinsics.focal
    tri_config = config.triangulation_config()

    lins = []
    for track in tracks:
        if len(track.obs) < 2:
            report.n_failed += 1
            continue
        try:
            p_G = triangulate(_clone_views(fs, track, config.intrinsics), tri_config)
            r, H_x, H_f = linearize_track(fs, track, p_G, config.intrinsics)
        except (TriangulationError, GeometryError) as e:
            logger.debug(f"Skipping captured track {track.id}: {e}")
            report.n_failed += 1
            continue
        noise = sigma**2 * np.eye(len(r))
        r, H_x, noise = nullspace_project(r, H_x, H_f, noise)
        lins.append(_Linearization(track, p_G, r, H_x, H_f, noise))

    return _apply_updates(fs, P, lins, report, config)


def inflate_noise(
    base_cov: np.ndarray,
    J_theta: np.ndarray,
    J_p: np.ndarray,
    Sigma_init: np.ndarray,
) -> np.ndarray:
    """
    Fold the map-to-global transform uncertainty into measurement noise.

    ``R' = R + J Sigma J^T`` with ``J = [J_theta, J_p]``, symmetrized and with
    negative eigenvalues floored. :func:`inflate_noise_counted` also returns
    the number of floored eigenvalues.

    :param np.ndarray base_cov: Measurement covariance, ``k x k``
    :param np.ndarray J_theta: ``k x 3`` derivative w.r.t. the rotation error
    :param np.ndarray J_p: ``k x 3`` derivative w.r.t. the translation error
    :param np.ndarray Sigma_init: 6x6 covariance ordered ``(rotation, translation)``
    :return: Inflated covariance
    :rtype: np.ndarray
    :raises UpdateError: If ``Sigma_init`` is not PSD
    """
    return inflate_noise_counted(base_cov, J_theta, J_p, Sigma_init)[0]


def inflate_noise_counted(
    base_cov: np.ndarray,
    J_theta: np.ndarray,
    J_p: np.ndarray,
    Sigma_init: np.ndarray,
) -> Tuple[np.ndarray, int]:
    """:func:`inflate_noise` plus the count of eigenvalues raised to the floor."""
    Sigma_init = np.asarray(Sigma_init, dtype=float)
    if np.min(np.linalg.eigvalsh(0.5 * (Sigma_init + Sigma_init.T))) < -1e-12:
        raise UpdateError("Initialization covariance is not PSD")

    J = np.hstack([J_theta, J_p])
    R = base_cov + J @ Sigma_init @ J.T
    R = 0.5 * (R + R.T)

    w, V = np.linalg.eigh(R)
    n_floored = int(np.count_nonzero(w < EIGENVALUE_FLOOR))
    if n_floored:
        logger.warning(
            f"Inflated noise had eigenvalue {np.min(w):.3e}; flooring "
            f"{n_floored} to {EIGENVALUE_FLOOR}"
        )
        R = V @ np.diag(np.maximum(w, EIGENVALUE_FLOOR)) @ V.T
        R = 0.5 * (R + R.T)
    return R, n_floored


def map_transform_jacobians(
    T_W_G: Pose, H_f: np.ndarray, anchor_W: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Derivatives of observations w.r.t. the map-to-global transform error.

    The error is ``R = exp([dtheta x]) R_hat``, ``t = t_hat + dp``.

    :param Pose T_W_G: Map-to-global transform estimate
    :param np.ndarray H_f: Derivative of the observations w.r.t. the global landmark
    :param np.ndarray anchor_W: Landmark in map coordinates
    :return: ``(J_theta, J_p)``
    :rtype: Tuple[np.ndarray, np.ndarray]
    """
    return -H_f @ skew(T_W_G.rotation @ anchor_W), H_f


def select_closest_clone(fs: FilterState, render_start_ts: float) -> float:
    """
    Timestamp of the clone closest to a render request, earlier one on ties.

    :param FilterState fs: Filter state
    :param float render_start_ts: Time the render was requested
    :return: Clone timestamp
    :rtype: float
    :raises UpdateError: If the window is empty
    """
    if not fs.clones:
        raise UpdateError("No clone available for a rendered frame")
    best_ts, best_dist = None, np.inf
    for c in fs.clones:
        dist = abs(c.timestamp - render_start_ts)
        if dist < best_dist - 1e-12:
            best_ts, best_dist = c.timestamp, dist
    return best_ts


def rendered_update(
    fs: FilterState,
    P: np.ndarray,
    tracks: Sequence[FeatureTrack],
    config: UpdateConfig = UpdateConfig(),
) -> Tuple[FilterState, np.ndarray, UpdateReport]:
    """
    Update the window with features detected in rendered map images.

    Landmarks are taken from ``track.anchor_W``; unanchored tracks with two
    or more observations are triangulated in the global frame and anchored
    through ``T_W_G``. Single-observation tracks use the anchored landmark
    directly; longer tracks are projected onto the nullspace of the landmark
    Jacobian. Noise is inflated by ``Sigma_init`` with the transform error
    parameterized as ``R = exp([dtheta x]) R_hat`` and ``t = t_hat + dp``.

    :param FilterState fs: Filter state
    :param np.ndarray P: Joint covariance
    :param tracks: Rendered tracks
    :type tracks: Sequence[FeatureTrack]
    :param UpdateConfig config: Measurement model
    :return: ``(fs, P, report)``
    :rtype: Tuple[FilterState, np.ndarray, UpdateReport]
    :raises UpdateError: On a singular innovation
    """
    report = UpdateReport(fs.timestamp, RENDERED, n_tracks=len(tracks))
    sigma = config.sigma_r / config.intrinsics.focal
    T = fs.T_W_G
    tri_config = config.triangulation_config()

    lins = []
    for track in tracks:
        try:
            if track.anchor_W is None:
                if len(track.obs) < 2:
                    raise TriangulationError("Unanchored track has one observation")
                p_G = triangulate(_clone_views(fs, track, config.intrinsics), tri_config)
                track.anchor_W = T.inverse().apply(p_G)
            p_G = T.apply(track.anchor_W)
            r, H_x, H_f = linearize_track(fs, track, p_G, config.intrinsics)
        except (TriangulationError, GeometryError) as e:
            logger.debug(f"Skipping rendered track {track.id}: {e}")
            report.n_failed += 1
            continue

        J_theta, J_p = map_transform_jacobians(T, H_f, track.anchor_W)
        noise, n_floored = inflate_noise_counted(
            sigma**2 * np.eye(len(r)), J_theta, J_p, fs.Sigma_init
        )
        report.n_floored += n_floored
        if len(track.obs) > 1:
            r, H_x, noise = nullspace_project(r, H_x, H_f @ T.rotation, noise)
            lins.append(_Linearization(track, p_G, r, H_x, H_f, noise))
        else:
            lins.append(_Linearization(track, p_G, r, H_x, None, noise))

    return _apply_updates(fs, P, lins, report, config)
