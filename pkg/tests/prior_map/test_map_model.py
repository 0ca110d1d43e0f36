import numpy as np
import pytest

from map_vio.estimation import Intrinsics
from map_vio.exceptions import MapError
from map_vio.geometry import Pose
from map_vio.prior_map import (
    ChangeRegion,
    MapModel,
    altered_cells,
    associate_corners,
    board_mask,
    fast_detect,
    project_landmarks,
    render,
    render_frame,
    visible_in_cells,
)
from map_vio.sim import generate_scene


def _look_at(center, target, up=(0.0, 0.0, 1.0)):
    z = np.asarray(target, float) - np.asarray(center, float)
    z = z / np.linalg.norm(z)
    x = np.cross(up, z)
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.vstack([x, y, z])
    return Pose(R, -R @ np.asarray(center, float))


def _single(position, amplitude=0.3, radius=0.012):
    return MapModel(
        intrinsics=Intrinsics(),
        ids=np.array([7]),
        positions=np.array([position], dtype=float),
        amplitudes=np.array([amplitude]),
        radii=np.array([radius]),
    )


def _empty():
    return MapModel(
        intrinsics=Intrinsics(),
        ids=np.zeros(0, dtype=int),
        positions=np.zeros((0, 3)),
        amplitudes=np.zeros(0),
        radii=np.zeros(0),
    )


def _centroid(diff):
    diff = np.abs(diff)
    v, u = np.indices(diff.shape)
    return np.array([(u * diff).sum(), (v * diff).sum()]) / diff.sum()


@pytest.fixture
def overhead():
    """Fixture providing a camera one meter above the origin looking down."""
    return _look_at([0.0, 0.0, 1.0], [0.0, 0.0, 0.0], up=(0.0, 1.0, 0.0))


@pytest.fixture
def scene_map():
    """Fixture providing the map of a simulated scene."""
    return MapModel.from_scene(generate_scene(0), Intrinsics())


def test_invalid_maps_rejected():
    """Mismatched lengths, negative latency and duplicate ids are refused."""
    with pytest.raises(MapError):
        MapModel(Intrinsics(), np.array([0, 1]), np.zeros((1, 3)), np.zeros(2), np.ones(2))
    with pytest.raises(MapError):
        MapModel(Intrinsics(), np.array([0]), np.zeros((1, 3)), np.zeros(1), np.ones(1), latency=-0.1)
    with pytest.raises(MapError):
        MapModel(Intrinsics(), np.array([3, 3]), np.zeros((2, 3)), np.zeros(2), np.ones(2))


def test_on_axis_blob_at_principal_point(overhead):
    """A landmark on the optical axis is drawn centered on the principal point."""
    K = Intrinsics()
    diff = render(_single([0.0, 0.0, 0.0]), overhead).data - render(_empty(), overhead).data
    np.testing.assert_allclose(_centroid(diff), [K.cx, K.cy], atol=1e-6)


def test_blob_centroid_matches_projection(overhead):
    """Off-axis blob centroids land within half a pixel of the projection."""
    empty = render(_empty(), overhead).data
    for p in ([0.1, 0.05, 0.0], [-0.123, 0.071, 0.0], [0.0317, -0.0913, 0.0]):
        model = _single(p)
        _, uv, _ = project_landmarks(model, overhead)
        diff = render(model, overhead).data - empty
        assert np.linalg.norm(_centroid(diff) - uv[0]) < 0.5


def test_render_is_deterministic(scene_map):
    """The same pose gives bitwise-identical images."""
    T = _look_at([1.5, 0.0, 0.5], [0.0, 0.0, 0.0])
    np.testing.assert_array_equal(render(scene_map, T).data, render(scene_map, T).data)


def test_render_is_continuous_in_pose(scene_map):
    """Half a millimeter of camera motion changes the image by under 1% RMS."""
    a = render(scene_map, _look_at([1.5, 0.0, 0.5], [0.0, 0.0, 0.0])).data
    b = render(scene_map, _look_at([1.5, 0.0005, 0.5], [0.0, 0.0, 0.0])).data
    assert np.sqrt(np.mean((a - b) ** 2)) < 0.01


def test_empty_view_is_background():
    """Looking away from every landmark leaves only the room shading."""
    model = _single([0.0, 0.0, 0.0])
    T = _look_at([0.0, 0.0, 0.5], [2.0, 0.0, 0.5])
    image = render(model, T).data
    np.testing.assert_array_equal(image, render(_empty(), T).data)
    assert np.all((image >= 0.29) & (image <= 0.41))


def test_rendered_frame_delivery_after_latency(scene_map):
    """A rendered frame arrives exactly one latency after its request."""
    frame = render_frame(scene_map, _look_at([1.5, 0.0, 0.5], [0.0, 0.0, 0.0]), 1.5)
    assert frame.delivery_ts == pytest.approx(1.5 + scene_map.latency)
    assert len(frame.visible_ids) == len(frame.visible_uv) > 0


def test_changed_world_displaces_and_covers(scene_map):
    """Landmarks inside a change region move and the region is covered by a board."""
    region = ChangeRegion([0.0, -0.5, -0.01], [0.5, 0.0, 0.01])
    model = MapModel.from_scene(generate_scene(0), Intrinsics(), change_regions=(region,))
    world = model.changed_world()
    inside = model.altered_mask()
    assert inside.any() and not inside.all()
    np.testing.assert_allclose(
        world.positions[inside] - model.positions[inside], np.tile(region.displacement, (inside.sum(), 1))
    )
    np.testing.assert_array_equal(world.positions[~inside], model.positions[~inside])

    T = _look_at([1.5, 0.0, 0.8], [0.0, 0.0, 0.0])
    mask = board_mask(world, T)
    assert mask.any()
    np.testing.assert_array_equal(render(world, T).data[mask], 1.0)
    assert not board_mask(model, T).any()


def test_board_mask_matches_region_footprint(overhead):
    """From straight above, the board covers the projected rectangle."""
    region = ChangeRegion([0.0, 0.0, -0.01], [0.2, 0.1, 0.0])
    world = MapModel(
        intrinsics=Intrinsics(),
        ids=np.zeros(0, dtype=int),
        positions=np.zeros((0, 3)),
        amplitudes=np.zeros(0),
        radii=np.zeros(0),
        boards=(region,),
    )
    mask = board_mask(world, overhead)
    # 0.2 m x 0.1 m at 1 m with f = 200 spans about 40 x 20 pixels.
    assert mask.sum() == pytest.approx(800, rel=0.1)


def test_altered_cells_coverage():
    """Cells with at least 60% coverage count as altered."""
    mask = np.zeros((120, 160), dtype=bool)
    mask[:15, :20] = True
    mask[15:30, :11] = True
    cells = altered_cells(mask, (8, 8))
    assert cells[0, 0] and not cells[1, 0]
    assert cells.sum() == 1


def test_visible_in_cells_uses_cell_edges():
    """Pixels map to the grid cell that contains them."""
    accepted = np.zeros((8, 8), dtype=bool)
    accepted[1, 2] = True
    uv = np.array([[45.0, 20.0], [39.4, 20.0], [45.0, 14.4]])
    np.testing.assert_array_equal(visible_in_cells(uv, accepted, (120, 160)), [True, False, False])


def test_associate_corners_nearest_within_radius():
    """Each landmark takes the nearest free corner within the radius."""
    corners = np.array([[10.0, 10.0], [10.5, 10.0], [50.0, 50.0]])
    ids = np.array([4, 9, 2])
    uv = np.array([[10.4, 10.0], [10.0, 10.2], [80.0, 80.0]])
    pairs = associate_corners(corners, ids, uv)
    assert [i for i, _ in pairs] == [4, 9]
    np.testing.assert_array_equal(dict(pairs)[4], [10.5, 10.0])
    np.testing.assert_array_equal(dict(pairs)[9], [10.0, 10.0])
    assert associate_corners(np.zeros((0, 2)), ids, uv) == []


def test_rendered_landmarks_are_detected(scene_map):
    """Most table landmarks in view yield a FAST corner next to their projection."""
    T = _look_at([1.5, 0.0, 0.5], [0.0, 0.0, 0.0])
    frame = render_frame(scene_map, T, 0.0, margin=4.0)
    corners, _ = fast_detect(frame.image, 0.1)
    pairs = associate_corners(corners, frame.visible_ids, frame.visible_uv)
    table = frame.visible_ids[frame.visible_ids < 200]
    matched = {i for i, _ in pairs}
    assert len(matched & set(table.tolist())) >= 0.5 * len(table)
    for i, c in pairs:
        k = int(np.flatnonzero(frame.visible_ids == i)[0])
        assert np.linalg.norm(c - frame.visible_uv[k]) <= 2.0


def test_background_has_no_corners():
    """The room shading alone never passes the segment test at t = 0.1."""
    T = _look_at([1.5, 0.0, 0.5], [0.0, 0.0, 0.0])
    corners, _ = fast_detect(render(_empty(), T), 0.1)
    assert len(corners) == 0
