import numpy as np
import pytest

from map_vio.estimation import Intrinsics
from map_vio.exceptions import MapError
from map_vio.geometry import Pose, Twist, se3_exp
from map_vio.prior_map import MapModel, render
from map_vio.refinement import photometric_loss, refine_pose_photometric
from map_vio.sim import generate_scene
from map_vio.utils import ImagePlane


def _look_at(center, target, up=(0.0, 0.0, 1.0)):
    z = np.asarray(target, float) - np.asarray(center, float)
    z = z / np.linalg.norm(z)
    x = np.cross(up, z)
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.vstack([x, y, z])
    return Pose(R, -R @ np.asarray(center, float))


@pytest.fixture
def scene_map():
    """Fixture providing the map of a simulated scene."""
    return MapModel.from_scene(generate_scene(0), Intrinsics())


@pytest.fixture
def true_pose():
    """Fixture providing a camera on the orbit looking at the table."""
    return _look_at([1.5, 0.0, 0.5], [0.0, 0.0, 0.0])


def test_truth_converges_without_steps(scene_map, true_pose):
    """Starting at the true pose stops at once with zero loss."""
    result = refine_pose_photometric(scene_map, render(scene_map, true_pose), true_pose)
    assert result.converged
    assert result.steps == 0
    assert result.loss == pytest.approx(0.0, abs=1e-12)


def test_losses_never_increase(scene_map, true_pose):
    """Accepted steps lower the photometric loss."""
    img = render(scene_map, true_pose)
    guess = se3_exp(Twist.from_vector([0.005, -0.004, 0.003, 0.01, 0.0, -0.01])) @ true_pose
    result = refine_pose_photometric(scene_map, img, guess, iters=5)
    assert result.losses[0] == pytest.approx(photometric_loss(scene_map, img, guess))
    assert np.all(np.diff(result.losses) < 0.0)
    assert len(result.losses) == result.steps + 1
    assert result.loss < result.losses[0]


def test_strict_budget_raises(scene_map, true_pose):
    """Running out of iterations in strict mode raises."""
    img = render(scene_map, true_pose)
    guess = se3_exp(Twist.from_vector([0.02, 0.0, 0.0, 0.0, 0.05, 0.0])) @ true_pose
    with pytest.raises(MapError):
        refine_pose_photometric(scene_map, img, guess, iters=0, strict=True)


def test_image_shape_must_match_renderer(scene_map, true_pose):
    """A captured image of another size is rejected."""
    with pytest.raises(MapError):
        photometric_loss(scene_map, ImagePlane(np.zeros((10, 12))), true_pose)
