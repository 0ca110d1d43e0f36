"""
Grayscale image container and resampling helpers.

Images are float arrays with intensities in ``[0, 1]``, indexed ``[row, col]``
so that pixel ``(u, v)`` is ``data[v, u]``.
"""

import logging
from dataclasses import dataclass

import numpy as np

from ..exceptions import MapError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ImagePlane:
    """
    Grayscale image.

    :ivar np.ndarray data: (height, width) intensities in ``[0, 1]``
    """

    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        if data.ndim != 2 or data.size == 0:
            raise MapError(f"Image must be a nonempty 2-D array, got {data.shape}")
        if not np.all(np.isfinite(data)) or data.min() < 0.0 or data.max() > 1.0:
            raise MapError("Image intensities must lie in [0, 1]")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self):
        return self.data.shape

    def flat(self) -> np.ndarray:
        """Row-major intensities."""
        return self.data.reshape(-1)

    def crop(self, rows: slice, cols: slice) -> np.ndarray:
        return self.data[rows, cols]


def _overlap_weights(n_in: int, n_out: int) -> np.ndarray:
    # Row i averages the input interval [i * n_in / n_out, (i + 1) * n_in / n_out).
    edges = np.arange(n_out + 1) * (n_in / n_out)
    lo = np.maximum(edges[:-1, None], np.arange(n_in)[None, :])
    hi = np.minimum(edges[1:, None], np.arange(n_in)[None, :] + 1.0)
    return np.clip(hi - lo, 0.0, None) * (n_out / n_in)


def area_downsample(image: np.ndarray, height: int, width: int) -> np.ndarray:
    """
    Resize by averaging the input area covered by each output pixel.

    Works for any size ratio, including upsampling.

    :param np.ndarray image: (H, W) array
    :param int height: Output rows
    :param int width: Output columns
    :return: (height, width) array
    :rtype: np.ndarray
    :raises MapError: If any dimension is zero
    """
    image = np.asarray(image, dtype=float)
    if image.ndim != 2 or 0 in image.shape or height <= 0 or width <= 0:
        raise MapError(
            f"Cannot resample image of shape {image.shape} to {height}x{width}"
        )
    A_r = _overlap_weights(image.shape[0], height)
    A_c = _overlap_weights(image.shape[1], width)
    return A_r @ image @ A_c.T
