"""
Pinhole camera model.

Features are carried in pixels; the filter works in normalized image
coordinates ``(x/z, y/z)`` with pixel noise scaled by ``1 / focal``.
"""

from dataclasses import dataclass

import numpy as np

from ..exceptions import ConfigValidationError, GeometryError

MIN_DEPTH = 1e-6


@dataclass(frozen=True)
class Intrinsics:
    """
    Pinhole intrinsics with square pixels.

    :ivar int width: Image width in pixels
    :ivar int height: Image height in pixels
    :ivar float focal: Focal length in pixels
    :ivar float cx: Principal point x, defaults to the image center
    :ivar float cy: Principal point y, defaults to the image center
    """

    width: int = 160
    height: int = 120
    focal: float = 200.0
    cx: float = -1.0
    cy: float = -1.0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0 or self.focal <= 0.0:
            raise ConfigValidationError(
                f"Invalid intrinsics {self.width}x{self.height}, f={self.focal}"
            )
        if self.cx < 0.0:
            object.__setattr__(self, "cx", 0.5 * (self.width - 1))
        if self.cy < 0.0:
            object.__setattr__(self, "cy", 0.5 * (self.height - 1))

    @property
    def K(self) -> np.ndarray:
        return np.array(
            [[self.focal, 0.0, self.cx], [0.0, self.focal, self.cy], [0.0, 0.0, 1.0]]
        )

    def pixel_to_normalized(self, uv: np.ndarray) -> np.ndarray:
        uv = np.asarray(uv, dtype=float)
        return (uv - np.array([self.cx, self.cy])) / self.focal

    def normalized_to_pixel(self, xy: np.ndarray) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        return xy * self.focal + np.array([self.cx, self.cy])

    def in_bounds(self, uv: np.ndarray, margin: float = 0.0) -> np.ndarray:
        """Boolean mask of pixels inside the image, shrunk by ``margin``."""
        uv = np.atleast_2d(np.asarray(uv, dtype=float))
        return (
            (uv[:, 0] >= margin)
            & (uv[:, 0] <= self.width - 1 - margin)
            & (uv[:, 1] >= margin)
            & (uv[:, 1] <= self.height - 1 - margin)
        )

    def pixel_rays(self) -> np.ndarray:
        """(H, W, 3) camera-frame ray directions with unit z."""
        u, v = np.meshgrid(np.arange(self.width), np.arange(self.height))
        rays = np.empty((self.height, self.width, 3))
        rays[..., 0] = (u - self.cx) / self.focal
        rays[..., 1] = (v - self.cy) / self.focal
        rays[..., 2] = 1.0
        return rays


def project(p_C: np.ndarray) -> np.ndarray:
    """
    Normalized projection of a camera-frame point.

    :param np.ndarray p_C: Point in the camera frame
    :return: ``(x/z, y/z)``
    :rtype: np.ndarray
    :raises GeometryError: If the point is not in front of the camera
    """
    p_C = np.asarray(p_C, dtype=float)
    if p_C[2] <= MIN_DEPTH:
        raise GeometryError(f"Point at depth {p_C[2]:.3e} is behind the camera")
    return p_C[:2] / p_C[2]


def projection_jacobian(p_C: np.ndarray) -> np.ndarray:
    """2x3 derivative of :func:`project` with respect to the camera-frame point."""
    x, y, z = np.asarray(p_C, dtype=float)
    if z <= MIN_DEPTH:
        raise GeometryError(f"Point at depth {z:.3e} is behind the camera")
    return np.array([[1.0 / z, 0.0, -x / (z * z)], [0.0, 1.0 / z, -y / (z * z)]])
