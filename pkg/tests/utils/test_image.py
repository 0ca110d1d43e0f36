import numpy as np
import pytest

from map_vio.exceptions import MapError
from map_vio.utils import ImagePlane, area_downsample


def test_image_plane_is_read_only():
    """Image data cannot be modified after construction."""
    img = ImagePlane(np.zeros((3, 4)))
    assert (img.height, img.width) == (3, 4)
    with pytest.raises(ValueError):
        img.data[0, 0] = 1.0


@pytest.mark.parametrize("data", [np.zeros(5), np.zeros((0, 3)), np.full((2, 2), 1.5)])
def test_invalid_images_rejected(data):
    """Wrong shapes and out-of-range intensities are refused."""
    with pytest.raises(MapError):
        ImagePlane(data)


def test_downsample_averages_blocks():
    """Integer ratios average whole blocks."""
    image = np.arange(16, dtype=float).reshape(4, 4)
    out = area_downsample(image, 2, 2)
    np.testing.assert_allclose(out, [[2.5, 4.5], [10.5, 12.5]])


def test_downsample_preserves_mean_for_any_ratio():
    """Fractional ratios keep the mean intensity."""
    image = np.random.default_rng(4).uniform(size=(7, 9))
    out = area_downsample(image, 3, 4)
    assert out.shape == (3, 4)
    assert out.mean() == pytest.approx(image.mean())


def test_downsample_constant_image():
    """A constant image stays constant, also when upsampling."""
    np.testing.assert_allclose(area_downsample(np.full((5, 5), 0.3), 8, 2), 0.3)


def test_downsample_to_nothing_rejected():
    """Zero output size is an error."""
    with pytest.raises(MapError):
        area_downsample(np.ones((4, 4)), 0, 2)
