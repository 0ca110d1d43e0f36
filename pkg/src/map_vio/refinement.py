"""
Iterative photometric pose refinement.

Baseline for relocalization that needs an initial guess: the camera pose is
moved downhill on the mean squared intensity difference between the image
and the map rendered at the pose. The gradient is taken by central
differences in the camera frame and steps are accepted by backtracking, so
the loss never increases.
"""

import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .exceptions import MapError
from .geometry import Pose, Twist, se3_exp
from .prior_map import MapModel, render
from .utils import ImagePlane

logger = logging.getLogger(__name__)

FD_STEP = 1e-3
INITIAL_STEP = 0.05
MIN_STEP = 1e-4
LOSS_TOLERANCE = 1e-12


@dataclass
class RefinementResult:
    """
    Outcome of a refinement.

    :ivar Pose pose: Final ``T_W_C``
    :ivar float loss: Final photometric loss
    :ivar int steps: Accepted steps
    :ivar bool converged: Stopped before running out of iterations
    :ivar List[float] losses: Loss after every accepted step, initial first
    """

    pose: Pose
    loss: float
    steps: int
    converged: bool
    losses: List[float] = field(default_factory=list)


def photometric_loss(map_model: MapModel, img: ImagePlane, T_W_C: Pose) -> float:
    """Mean squared intensity difference between ``img`` and the map at ``T_W_C``."""
    rendered = render(map_model, T_W_C)
    if rendered.shape != img.shape:
        raise MapError(f"Image {img.shape} does not match the renderer {rendered.shape}")
    return float(np.mean((rendered.data - img.data) ** 2))


def _perturb(T: Pose, delta: np.ndarray) -> Pose:
    return se3_exp(Twist.from_vector(delta)) @ T


def _gradient(map_model: MapModel, img: ImagePlane, T: Pose) -> np.ndarray:
    grad = np.zeros(6)
    for k in range(6):
        step = np.zeros(6)
        step[k] = FD_STEP
        up = photometric_loss(map_model, img, _perturb(T, step))
        down = photometric_loss(map_model, img, _perturb(T, -step))
        grad[k] = (up - down) / (2.0 * FD_STEP)
    return grad


def refine_pose_photometric(
    map_model: MapModel,
    img: ImagePlane,
    guess: Pose,
    iters: int = 40,
    strict: bool = False,
) -> RefinementResult:
    """
    Refine a camera pose against the prior map.

    Each iteration moves along the normalized negative gradient. The step
    length halves until the loss drops; if it falls below the minimum step,
    the pose is a local minimum and refinement stops.

    :param MapModel map_model: Prior map
    :param ImagePlane img: Captured image
    :param Pose guess: Initial ``T_W_C``
    :param int iters: Iteration budget
    :param bool strict: Raise if the budget runs out before convergence
    :return: Refinement outcome
    :rtype: RefinementResult
    :raises MapError: On a non-finite loss, or in strict mode when the budget
        runs out
    """
    T = guess
    loss = photometric_loss(map_model, img, T)
    losses = [loss]
    alpha = INITIAL_STEP
    steps = 0
    converged = False

    for _ in range(iters):
        if loss <= LOSS_TOLERANCE:
            converged = True
            break
        grad = _gradient(map_model, img, T)
        norm = float(np.linalg.norm(grad))
        if not np.isfinite(norm):
            raise MapError(f"Photometric gradient is not finite at loss {loss:.6g}")
        if norm == 0.0:
            converged = True
            break
        direction = -grad / norm
        while alpha >= MIN_STEP:
            candidate = _perturb(T, alpha * direction)
            trial = photometric_loss(map_model, img, candidate)
            if trial < loss:
                T, loss = candidate, trial
                losses.append(loss)
                steps += 1
                alpha = min(2.0 * alpha, INITIAL_STEP)
                break
            alpha *= 0.5
        else:
            converged = True
            break

    if not converged:
        logger.debug(f"Refinement used all {iters} iterations, final loss {loss:.6g}")
        if strict:
            raise MapError(f"Refinement did not converge, final loss {loss:.6g}")
    return RefinementResult(T, loss, steps, converged, losses)
