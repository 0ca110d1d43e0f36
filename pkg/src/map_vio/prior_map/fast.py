"""
FAST-9 corner detector.

A pixel is a corner when at least nine contiguous pixels of the 16-pixel
Bresenham circle of radius 3 are all brighter than the center plus ``t`` or
all darker than the center minus ``t``. Corners are scored by the largest
margin by which a qualifying arc clears the threshold and thinned by 3x3
non-maximum suppression.
"""

import logging
from typing import Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..exceptions import MapError
from ..utils import ImagePlane

logger = logging.getLogger(__name__)

# (du, dv) offsets clockwise from the top.
CIRCLE = (
    (0, -3), (1, -3), (2, -2), (3, -1),
    (3, 0), (3, 1), (2, 2), (1, 3),
    (0, 3), (-1, 3), (-2, 2), (-3, 1),
    (-3, 0), (-3, -1), (-2, -2), (-1, -3),
)  # fmt: skip
ARC = 9
RADIUS = 3


def segment_test(data: np.ndarray, threshold: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Score and arc support of every pixel.

    :param np.ndarray data: (H, W) intensities
    :param float threshold: Intensity threshold ``t``
    :return: ``(score, arcs)`` with ``score <= 0`` for non-corners and
        ``arcs`` the number of qualifying 9-pixel windows; border pixels get
        ``-inf`` and 0
    :rtype: Tuple[np.ndarray, np.ndarray]
    """
    H, W = data.shape
    center = data[RADIUS : H - RADIUS, RADIUS : W - RADIUS]
    ring = np.stack(
        [
            data[RADIUS + dv : H - RADIUS + dv, RADIUS + du : W - RADIUS + du]
            for du, dv in CIRCLE
        ],
        axis=-1,
    )
    diff = ring - center[..., None]
    wrapped = np.concatenate([diff, diff[..., : ARC - 1]], axis=-1)
    windows = sliding_window_view(wrapped, ARC, axis=-1)
    brighter = windows.min(axis=-1) - threshold
    darker = -windows.max(axis=-1) - threshold
    margin = np.maximum(brighter, darker)

    score = np.full((H, W), -np.inf)
    arcs = np.zeros((H, W), dtype=int)
    score[RADIUS : H - RADIUS, RADIUS : W - RADIUS] = margin.max(axis=-1)
    arcs[RADIUS : H - RADIUS, RADIUS : W - RADIUS] = (margin > 0.0).sum(axis=-1)
    return score, arcs


def nonmax_suppression(score: np.ndarray, arcs: np.ndarray) -> np.ndarray:
    """
    Keep corners that beat every 8-neighbour on ``(score, arcs)``.

    Exact ties go to the pixel earlier in raster order.
    """
    H, W = score.shape
    is_corner = score > 0.0
    s = np.where(is_corner, score, -np.inf)
    pad_s = np.pad(s, 1, constant_values=-np.inf)
    pad_a = np.pad(arcs, 1, constant_values=0)
    keep = is_corner.copy()
    for dv in (-1, 0, 1):
        for du in (-1, 0, 1):
            if du == 0 and dv == 0:
                continue
            ns = pad_s[1 + dv : 1 + dv + H, 1 + du : 1 + du + W]
            na = pad_a[1 + dv : 1 + dv + H, 1 + du : 1 + du + W]
            tie = (ns == s) & (na == arcs)
            earlier = dv < 0 or (dv == 0 and du < 0)
            beaten = (ns > s) | ((ns == s) & (na > arcs)) | (tie & earlier)
            keep &= ~beaten
    return keep


def _refine(data: np.ndarray, v: int, u: int) -> np.ndarray:
    # Centroid of the 3x3 contrast against the circle mean, moved by at most half a pixel.
    patch = data[v - 1 : v + 2, u - 1 : u + 2]
    ring_mean = np.mean([data[v + dv, u + du] for du, dv in CIRCLE])
    polarity = 1.0 if data[v, u] >= ring_mean else -1.0
    w = np.clip(polarity * (patch - ring_mean), 0.0, None)
    total = w.sum()
    if total <= 0.0:
        return np.array([u, v], dtype=float)
    dv_grid, du_grid = np.mgrid[-1:2, -1:2]
    offset = np.clip([(w * du_grid).sum() / total, (w * dv_grid).sum() / total], -0.5, 0.5)
    return np.array([u, v], dtype=float) + offset


def fast_detect(
    image: ImagePlane, threshold: float, nonmax: bool = True, refine: bool = True
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Detect FAST-9 corners.

    :param ImagePlane image: Grayscale image
    :param float threshold: Intensity threshold, > 0
    :param bool nonmax: Apply 3x3 non-maximum suppression
    :param bool refine: Sub-pixel refinement by contrast centroid
    :return: ``(corners, scores)``; corners are (N, 2) ``(u, v)`` pixels in
        raster order
    :rtype: Tuple[np.ndarray, np.ndarray]
    :raises MapError: If the image is smaller than 7x7 or the threshold is
        not positive
    """
    data = image.data
    if min(data.shape) < 2 * RADIUS + 1:
        raise MapError(f"Image {data.shape} is too small for FAST")
    if threshold <= 0.0:
        raise MapError(f"FAST threshold {threshold} must be > 0")

    score, arcs = segment_test(data, threshold)
    keep = nonmax_suppression(score, arcs) if nonmax else score > 0.0
    vs, us = np.nonzero(keep)
    if refine:
        corners = np.array([_refine(data, v, u) for v, u in zip(vs, us)])
    else:
        corners = np.column_stack([us, vs]).astype(float)
    logger.debug(f"FAST found {len(vs)} corners at t={threshold}")
    return corners.reshape(-1, 2), score[vs, us]
