"""
Multi-view triangulation of point features.

A linear (DLT) estimate seeds Gauss-Newton refinement of the global point
position against normalized image observations.
"""

import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from ..exceptions import GeometryError, TriangulationError
from ..geometry import Pose
from .camera import project, projection_jacobian

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TriangulationConfig:
    """
    Acceptance thresholds for a triangulated point.

    :ivar float min_baseline: Minimum distance between camera centers, m
    :ivar float min_parallax_deg: Minimum angle between viewing rays, degrees
    :ivar float max_rms_px: Maximum reprojection RMS, pixels
    :ivar float focal: Focal length used to convert residuals to pixels
    :ivar int max_iterations: Gauss-Newton iteration cap
    :ivar float step_tol: Gauss-Newton convergence threshold on the step, m
    """

    min_baseline: float = 0.01
    min_parallax_deg: float = 0.5
    max_rms_px: float = 4.0
    focal: float = 200.0
    max_iterations: int = 20
    step_tol: float = 1e-8


def _camera_center(T_G_C: Pose) -> np.ndarray:
    return -T_G_C.rotation.T @ T_G_C.translation


def linear_triangulate(views: Sequence[Tuple[Pose, np.ndarray]]) -> np.ndarray:
    """
    DLT triangulation from normalized observations.

    :param views: ``(T_G_C, xy)`` pairs; ``T_G_C`` maps global points into the camera
    :type views: Sequence[Tuple[Pose, np.ndarray]]
    :return: Global point
    :rtype: np.ndarray
    :raises TriangulationError: If the homogeneous solution is at infinity
    """
    rows = []
    for T, xy in views:
        Pm = np.hstack([T.rotation, T.translation[:, None]])
        rows.append(xy[0] * Pm[2] - Pm[0])
        rows.append(xy[1] * Pm[2] - Pm[1])
    _, _, vh = np.linalg.svd(np.asarray(rows))
    X = vh[-1]
    if abs(X[3]) < 1e-12:
        raise TriangulationError("Linear triangulation returned a point at infinity")
    return X[:3] / X[3]


def _residuals(views, p_G):
    r, J = [], []
    for T, xy in views:
        p_C = T.apply(p_G)
        r.append(xy - project(p_C))
        J.append(projection_jacobian(p_C) @ T.rotation)
    return np.concatenate(r), np.vstack(J)


def triangulate(
    views: Sequence[Tuple[Pose, np.ndarray]],
    config: TriangulationConfig = TriangulationConfig(),
) -> np.ndarray:
    """
    Triangulate a point seen from two or more camera poses.

    :param views: ``(T_G_C, xy)`` pairs with normalized observations
    :type views: Sequence[Tuple[Pose, np.ndarray]]
    :param TriangulationConfig config: Acceptance thresholds
    :return: Global point
    :rtype: np.ndarray
    :raises TriangulationError: On short baseline, low parallax, divergence or
        a reprojection RMS above the gate
    """
    if len(views) < 2:
        raise TriangulationError(f"Need at least 2 views, got {len(views)}")

    centers = np.array([_camera_center(T) for T, _ in views])
    baseline = float(
        np.max(np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=-1))
    )
    if baseline < config.min_baseline:
        raise TriangulationError(f"Baseline {baseline:.4f} m too short")

    rays = np.array(
        [T.rotation.T @ np.array([xy[0], xy[1], 1.0]) for T, xy in views]
    )
    rays /= np.linalg.norm(rays, axis=1, keepdims=True)
    cos_max = np.clip(rays @ rays.T, -1.0, 1.0)
    parallax = float(np.degrees(np.arccos(np.min(cos_max))))
    if parallax < config.min_parallax_deg:
        raise TriangulationError(f"Parallax {parallax:.3f} deg too small")

    p_G = linear_triangulate(views)
    try:
        for _ in range(config.max_iterations):
            r, J = _residuals(views, p_G)
            step = np.linalg.solve(J.T @ J, J.T @ r)
            p_G = p_G + step
            if not np.all(np.isfinite(p_G)):
                raise TriangulationError("Gauss-Newton diverged")
            if np.linalg.norm(step) < config.step_tol:
                break
        r, _ = _residuals(views, p_G)
    except (GeometryError, np.linalg.LinAlgError) as e:
        raise TriangulationError(f"Gauss-Newton failed: {e}") from e

    rms_px = float(np.sqrt(np.mean(r**2))) * config.focal * np.sqrt(2.0)
    if rms_px > config.max_rms_px:
        raise TriangulationError(f"Reprojection RMS {rms_px:.2f} px above gate")
    return p_G
