"""
Grid-based structural similarity between rendered and captured images.

Cells where the map no longer matches the world score low and are excluded
from feature extraction.
"""

import logging
from typing import Tuple

import numpy as np
from skimage.metrics import structural_similarity

from ..exceptions import ConfigValidationError, MapError
from ..utils import ImagePlane
from .map_model import cell_slices

logger = logging.getLogger(__name__)

SSIM_SIGMA = 1.5
SSIM_WINDOW = 11
DATA_RANGE = 1.0


def cell_ssim(a: np.ndarray, b: np.ndarray) -> float:
    """
    SSIM of two equally sized crops.

    Gaussian 11x11 window with sigma 1.5, ``K1 = 0.01``, ``K2 = 0.03`` and a
    dynamic range of 1.0, averaged over the crop.
    """
    return float(
        structural_similarity(
            a,
            b,
            gaussian_weights=True,
            sigma=SSIM_SIGMA,
            use_sample_covariance=False,
            data_range=DATA_RANGE,
        )
    )


def check_grid(image_shape: Tuple[int, int], grid: Tuple[int, int]) -> None:
    """
    Reject grids whose smallest cell cannot hold an SSIM window.

    :raises ConfigValidationError: If a cell is smaller than 11x11 pixels
    """
    rows, cols = grid
    height, width = image_shape
    if rows <= 0 or cols <= 0:
        raise ConfigValidationError(f"Invalid SSIM grid {grid}")
    if height // rows < SSIM_WINDOW or width // cols < SSIM_WINDOW:
        raise ConfigValidationError(
            f"SSIM grid {rows}x{cols} on a {width}x{height} image gives cells "
            f"below {SSIM_WINDOW}x{SSIM_WINDOW} pixels"
        )


def ssim_grid(
    rendered: ImagePlane, captured: ImagePlane, grid: Tuple[int, int] = (8, 8)
) -> np.ndarray:
    """
    Per-cell SSIM scores.

    :param ImagePlane rendered: Map image
    :param ImagePlane captured: Camera image
    :param grid: ``(rows, cols)``
    :type grid: Tuple[int, int]
    :return: (rows, cols) scores
    :rtype: np.ndarray
    :raises MapError: If the images differ in size
    """
    if rendered.shape != captured.shape:
        raise MapError(
            f"Cannot compare images of shapes {rendered.shape} and {captured.shape}"
        )
    check_grid(rendered.shape, grid)
    scores = np.empty(grid)
    for (r, c), (rs, cs) in cell_slices(rendered.shape, grid):
        scores[r, c] = cell_ssim(rendered.data[rs, cs], captured.data[rs, cs])
    return scores


def ssim_grid_filter(
    rendered: ImagePlane,
    captured: ImagePlane,
    grid: Tuple[int, int] = (8, 8),
    threshold: float = 0.8,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Accept the cells whose SSIM reaches the threshold.

    :param ImagePlane rendered: Map image
    :param ImagePlane captured: Camera image
    :param grid: ``(rows, cols)``
    :type grid: Tuple[int, int]
    :param float threshold: Minimum SSIM of an accepted cell
    :return: ``(accepted, scores)``, both (rows, cols)
    :rtype: Tuple[np.ndarray, np.ndarray]
    """
    scores = ssim_grid(rendered, captured, grid)
    accepted = scores >= threshold
    logger.debug(
        f"SSIM grid accepted {int(accepted.sum())}/{accepted.size} cells "
        f"(min {scores.min():.3f})"
    )
    return accepted, scores
