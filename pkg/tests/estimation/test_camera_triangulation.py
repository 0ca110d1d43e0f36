import numpy as np
import pytest

from map_vio.estimation import (
    Intrinsics,
    TriangulationConfig,
    linear_triangulate,
    project,
    projection_jacobian,
    triangulate,
)
from map_vio.exceptions import GeometryError, TriangulationError
from map_vio.geometry import Pose, so3_exp


@pytest.fixture
def rng():
    """Fixture providing a seeded random generator."""
    return np.random.default_rng(5)


def _look_at(center, target):
    """Global-to-camera pose of a z-forward camera at center facing target."""
    z = target - center
    z = z / np.linalg.norm(z)
    x = np.cross([0.0, 0.0, 1.0], z)
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.vstack([x, y, z])
    return Pose(R, -R @ center)


def _views(point, centers, noise_px=0.0, rng=None, focal=200.0):
    views = []
    for c in centers:
        T = _look_at(np.asarray(c, float), point)
        xy = project(T.apply(point))
        if noise_px:
            xy = xy + rng.normal(size=2) * noise_px / focal
        views.append((T, xy))
    return views


def test_project_examples():
    """(2, 4, 2) projects to (1, 2) and the optical axis to the origin."""
    np.testing.assert_allclose(project([2.0, 4.0, 2.0]), [1.0, 2.0])
    np.testing.assert_allclose(project([0.0, 0.0, 1.0]), [0.0, 0.0])
    np.testing.assert_allclose(
        projection_jacobian([0.0, 0.0, 1.0]), [[1, 0, 0], [0, 1, 0]]
    )


def test_projection_jacobian_matches_central_differences(rng):
    """Analytic projection Jacobian agrees with numeric differentiation."""
    for _ in range(20):
        p = rng.normal(size=3) + [0.0, 0.0, 3.0]
        J_num = np.zeros((2, 3))
        for j in range(3):
            e = np.zeros(3)
            e[j] = 1e-6
            J_num[:, j] = (project(p + e) - project(p - e)) / 2e-6
        assert np.max(np.abs(J_num - projection_jacobian(p))) < 1e-8


def test_point_behind_camera_rejected():
    """Non-positive depth cannot be projected."""
    with pytest.raises(GeometryError):
        project([0.0, 0.0, -1.0])


def test_intrinsics_pixel_round_trip():
    """Normalized and pixel coordinates convert back and forth."""
    K = Intrinsics(160, 120, 200.0)
    uv = np.array([12.5, 100.25])
    np.testing.assert_allclose(K.normalized_to_pixel(K.pixel_to_normalized(uv)), uv)
    assert K.in_bounds([[0.0, 0.0], [159.0, 119.0]]).all()
    assert not K.in_bounds([[-0.5, 10.0]]).any()


def test_noise_free_two_view_is_exact():
    """Two exact observations recover the point to 1e-9 m."""
    point = np.array([0.2, -0.1, 0.05])
    views = _views(point, [[1.5, 0.0, 0.5], [1.4, 0.4, 0.5]])
    np.testing.assert_allclose(triangulate(views), point, atol=1e-9)


def test_collinear_rays_are_ill_conditioned():
    """Cameras on a line through the point give no parallax."""
    point = np.array([0.0, 0.0, 0.0])
    views = _views(point, [[1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [3.0, 0.0, 0.0]])
    with pytest.raises(TriangulationError):
        triangulate(views)


def test_short_baseline_rejected():
    """Camera centers closer than a centimeter are refused."""
    point = np.array([0.0, 0.0, 0.0])
    views = _views(point, [[1.0, 0.0, 0.3], [1.0, 0.005, 0.3]])
    with pytest.raises(TriangulationError):
        triangulate(views)


def test_single_view_rejected():
    """At least two views are required."""
    views = _views(np.zeros(3), [[1.0, 0.0, 0.3]])
    with pytest.raises(TriangulationError):
        triangulate(views)


def test_noisy_refinement_not_worse_than_linear(rng):
    """With 1 px noise over 10 views, refined error stays within 20% of DLT."""
    refined, linear = [], []
    for _ in range(200):
        point = rng.uniform(-0.3, 0.3, size=3) * [1.0, 1.0, 0.2]
        az = rng.uniform(0.0, 2 * np.pi) + np.linspace(0.0, 0.6, 10)
        centers = np.stack([1.5 * np.cos(az), 1.5 * np.sin(az), 0.5 + 0 * az], axis=1)
        views = _views(point, centers, noise_px=1.0, rng=rng)
        refined.append(np.linalg.norm(triangulate(views) - point))
        linear.append(np.linalg.norm(linear_triangulate(views) - point))
    assert np.mean(refined) <= 1.2 * np.mean(linear)


def test_reprojection_gate():
    """An inconsistent observation trips the RMS gate."""
    point = np.array([0.1, 0.0, 0.0])
    views = _views(point, [[1.5, 0.0, 0.5], [1.4, 0.4, 0.5], [1.2, -0.5, 0.5]])
    T, xy = views[2]
    views[2] = (T, xy + [0.2, 0.0])
    with pytest.raises(TriangulationError):
        triangulate(views, TriangulationConfig(max_rms_px=4.0))


def test_linear_triangulation_exact(rng):
    """DLT is exact on noise-free data from rotated cameras."""
    point = rng.normal(size=3)
    views = []
    for _ in range(4):
        R = so3_exp(rng.normal(size=3) * 0.1)
        center = point - R.T @ np.array([0.0, 0.0, 3.0]) + rng.normal(size=3) * 0.3
        T = Pose(R, -R @ center)
        views.append((T, project(T.apply(point))))
    np.testing.assert_allclose(linear_triangulate(views), point, atol=1e-9)
