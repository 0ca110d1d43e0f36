"""
Analytic prior-map renderer.

The map is a set of landmarks drawn as Gaussian intensity blobs over a
smoothly shaded room: a floor at ``z = 0`` surrounded by four walls. Rendering
is a pure function of the camera pose, so equal poses give bitwise-equal
images.

Change regions describe parts of the scene that differ between the map and
the world: their landmarks are displaced and a flat bright board lies over
them. The map never draws boards; :meth:`MapModel.changed_world` returns the
model of the altered world used to produce captured images.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import List, Tuple

import numpy as np

from ..estimation import Intrinsics
from ..exceptions import MapError
from ..geometry import Pose
from ..utils import ImagePlane

logger = logging.getLogger(__name__)

BACKGROUND_LEVEL = 0.35
TEXTURE_AMPLITUDE = 0.05
TEXTURE_PERIOD = 0.4
BOARD_INTENSITY = 1.0
BLOB_SUPPORT = 4.0
MIN_BLOB_SIGMA = 1.0
MIN_RENDER_DEPTH = 0.05


@dataclass(frozen=True)
class ChangeRegion:
    """
    Axis-aligned world box altered after the map was built.

    :ivar np.ndarray lower: Box minimum corner, m
    :ivar np.ndarray upper: Box maximum corner, m
    :ivar np.ndarray displacement: Shift applied to landmarks inside, m
    """

    lower: np.ndarray
    upper: np.ndarray
    displacement: np.ndarray = field(
        default_factory=lambda: np.array([0.03, 0.03, 0.0])
    )

    def __post_init__(self):
        for name in ("lower", "upper", "displacement"):
            object.__setattr__(
                self, name, np.asarray(getattr(self, name), dtype=float).reshape(3)
            )
        if np.any(self.upper <= self.lower):
            raise MapError(f"Change region {self.lower} .. {self.upper} is empty")

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        return np.all((points >= self.lower) & (points <= self.upper), axis=1)


@dataclass(frozen=True)
class MapModel:
    """
    Landmark map with its rendering camera.

    :ivar Intrinsics intrinsics: Camera used for rendering
    :ivar np.ndarray ids: (N,) landmark ids
    :ivar np.ndarray positions: (N, 3) landmark positions in the map frame, m
    :ivar np.ndarray amplitudes: (N,) signed blob contrast
    :ivar np.ndarray radii: (N,) blob radius, m
    :ivar float latency: Render latency, s
    :ivar float room_half_size: Half side of the room, m
    :ivar Tuple[ChangeRegion, ...] change_regions: Regions altered in the world
    :ivar Tuple[ChangeRegion, ...] boards: Regions drawn as bright boards
    """

    intrinsics: Intrinsics
    ids: np.ndarray
    positions: np.ndarray
    amplitudes: np.ndarray
    radii: np.ndarray
    latency: float = 0.2
    room_half_size: float = 2.5
    change_regions: Tuple[ChangeRegion, ...] = ()
    boards: Tuple[ChangeRegion, ...] = ()

    def __post_init__(self):
        n = len(self.ids)
        if np.shape(self.positions) != (n, 3):
            raise MapError(f"Expected {n} landmark positions, got {np.shape(self.positions)}")
        if len(self.amplitudes) != n or len(self.radii) != n:
            raise MapError("Landmark attribute lengths differ")
        if np.any(np.asarray(self.radii) <= 0.0):
            raise MapError("Landmark radii must be positive")
        if self.latency < 0.0:
            raise MapError(f"Render latency {self.latency} must be >= 0")
        if len(set(np.asarray(self.ids).tolist())) != n:
            raise MapError("Landmark ids must be unique")
        object.__setattr__(self, "change_regions", tuple(self.change_regions))
        object.__setattr__(self, "boards", tuple(self.boards))

    @classmethod
    def from_scene(
        cls,
        scene,
        intrinsics: Intrinsics,
        latency: float = 0.2,
        change_regions: Tuple[ChangeRegion, ...] = (),
    ) -> "MapModel":
        """Map of a simulated scene, without boards."""
        return cls(
            intrinsics=intrinsics,
            ids=np.asarray(scene.ids),
            positions=np.asarray(scene.positions, dtype=float),
            amplitudes=np.asarray(scene.amplitudes, dtype=float),
            radii=np.asarray(scene.radii, dtype=float),
            latency=latency,
            room_half_size=scene.room_half_size,
            change_regions=tuple(change_regions),
        )

    def __len__(self) -> int:
        return len(self.ids)

    def index_of(self, landmark_id: int) -> int:
        hits = np.flatnonzero(np.asarray(self.ids) == landmark_id)
        if hits.size == 0:
            raise MapError(f"Unknown landmark id {landmark_id}")
        return int(hits[0])

    def altered_mask(self) -> np.ndarray:
        """Landmarks inside any change region."""
        mask = np.zeros(len(self), dtype=bool)
        for region in self.change_regions:
            mask |= region.contains(self.positions)
        return mask

    def changed_world(self) -> "MapModel":
        """
        Model of the world after the changes.

        Landmarks inside change regions are displaced and every region is
        covered by a board.
        """
        positions = np.array(self.positions, dtype=float)
        for region in self.change_regions:
            inside = region.contains(self.positions)
            positions[inside] += region.displacement
        return replace(self, positions=positions, boards=self.change_regions)


@dataclass(frozen=True)
class RenderedFrame:
    """
    A map image and its bookkeeping.

    :ivar float request_ts: Time the render was requested, s
    :ivar float delivery_ts: Time the image becomes available, s
    :ivar Pose pose_used: ``T_W_C`` the image was rendered at
    :ivar ImagePlane image: Rendered image
    :ivar np.ndarray visible_ids: Landmarks projecting inside the image
    :ivar np.ndarray visible_uv: (K, 2) their pixel positions
    """

    request_ts: float
    delivery_ts: float
    pose_used: Pose
    image: ImagePlane
    visible_ids: np.ndarray
    visible_uv: np.ndarray


def _background(map_model: MapModel, T_W_C: Pose) -> Tuple[np.ndarray, np.ndarray]:
    """Shaded room and world hit points of every pixel ray."""
    K = map_model.intrinsics
    rays_C = K.pixel_rays()
    R_CW = T_W_C.rotation.T
    center = -R_CW @ T_W_C.translation
    d = rays_C @ R_CW.T

    L = map_model.room_half_size
    with np.errstate(divide="ignore", invalid="ignore"):
        s_floor = np.where(d[..., 2] < 0.0, -center[2] / d[..., 2], np.inf)
        s_wall = np.full(d.shape[:2], np.inf)
        for axis in (0, 1):
            for bound in (-L, L):
                s = (bound - center[axis]) / d[..., axis]
                s_wall = np.where(s > 0.0, np.minimum(s_wall, s), s_wall)
        s_hit = np.minimum(s_floor, s_wall)
        hit = center + d * s_hit[..., None]
        hit = np.where(np.isfinite(hit), hit, 0.0)

    k = 2.0 * np.pi / TEXTURE_PERIOD
    on_floor = s_floor <= s_wall
    floor = np.sin(k * hit[..., 0]) * np.sin(k * hit[..., 1])
    along = np.where(np.abs(np.abs(hit[..., 0]) - L) < 1e-9, hit[..., 1], hit[..., 0])
    wall = np.sin(k * along) * np.cos(k * hit[..., 2])
    image = BACKGROUND_LEVEL + TEXTURE_AMPLITUDE * np.where(on_floor, floor, wall)
    image = np.where(np.isfinite(s_hit), image, BACKGROUND_LEVEL)
    return image, hit


def board_mask(map_model: MapModel, T_W_C: Pose) -> np.ndarray:
    """
    Pixels covered by a board.

    Each board is the top face of its change region, seen from above.

    :param MapModel map_model: Model whose ``boards`` are drawn
    :param Pose T_W_C: World-to-camera pose
    :return: (H, W) boolean mask
    :rtype: np.ndarray
    """
    K = map_model.intrinsics
    mask = np.zeros((K.height, K.width), dtype=bool)
    if not map_model.boards:
        return mask
    R_CW = T_W_C.rotation.T
    center = -R_CW @ T_W_C.translation
    d = K.pixel_rays() @ R_CW.T
    for region in map_model.boards:
        h = region.upper[2]
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (h - center[2]) / d[..., 2]
        p = center + d * s[..., None]
        mask |= (
            (s > 0.0)
            & (p[..., 0] >= region.lower[0])
            & (p[..., 0] <= region.upper[0])
            & (p[..., 1] >= region.lower[1])
            & (p[..., 1] <= region.upper[1])
        )
    return mask


def project_landmarks(
    map_model: MapModel, T_W_C: Pose, margin: float = 0.0
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Landmarks in front of the camera and inside the image.

    :return: ``(indices, uv, depth)``
    :rtype: Tuple[np.ndarray, np.ndarray, np.ndarray]
    """
    K = map_model.intrinsics
    p_C = T_W_C.apply(map_model.positions)
    idx = np.flatnonzero(p_C[:, 2] > MIN_RENDER_DEPTH)
    uv = K.normalized_to_pixel(p_C[idx, :2] / p_C[idx, 2:3])
    inside = K.in_bounds(uv, margin)
    return idx[inside], uv[inside], p_C[idx[inside], 2]


def render(map_model: MapModel, T_W_C: Pose) -> ImagePlane:
    """
    Grayscale image of the map seen from a camera pose.

    :param MapModel map_model: Map to draw
    :param Pose T_W_C: World-to-camera pose
    :return: Image with intensities clipped to ``[0, 1]``
    :rtype: ImagePlane
    """
    K = map_model.intrinsics
    image, _ = _background(map_model, T_W_C)

    p_C = T_W_C.apply(map_model.positions)
    rows = np.arange(K.height, dtype=float)
    cols = np.arange(K.width, dtype=float)
    for i in np.flatnonzero(p_C[:, 2] > MIN_RENDER_DEPTH):
        z = p_C[i, 2]
        u, v = K.normalized_to_pixel(p_C[i, :2] / z)
        sigma = max(MIN_BLOB_SIGMA, K.focal * map_model.radii[i] / z)
        reach = BLOB_SUPPORT * sigma
        c0, c1 = int(np.floor(u - reach)), int(np.ceil(u + reach)) + 1
        r0, r1 = int(np.floor(v - reach)), int(np.ceil(v + reach)) + 1
        c0, r0 = max(c0, 0), max(r0, 0)
        c1, r1 = min(c1, K.width), min(r1, K.height)
        if c0 >= c1 or r0 >= r1:
            continue
        gu = np.exp(-0.5 * ((cols[c0:c1] - u) / sigma) ** 2)
        gv = np.exp(-0.5 * ((rows[r0:r1] - v) / sigma) ** 2)
        image[r0:r1, c0:c1] += map_model.amplitudes[i] * np.outer(gv, gu)

    if map_model.boards:
        image[board_mask(map_model, T_W_C)] = BOARD_INTENSITY
    return ImagePlane(np.clip(image, 0.0, 1.0))


def render_frame(
    map_model: MapModel,
    T_W_C: Pose,
    request_ts: float,
    margin: float = 0.0,
) -> RenderedFrame:
    """
    Render at a pose and stamp the result with its delivery time.

    :param MapModel map_model: Map to draw
    :param Pose T_W_C: Estimated world-to-camera pose
    :param float request_ts: Request time, s
    :param float margin: Border excluded from the visible list, px
    :return: Rendered frame delivered ``latency`` after the request
    :rtype: RenderedFrame
    """
    idx, uv, _ = project_landmarks(map_model, T_W_C, margin)
    frame = RenderedFrame(
        request_ts=request_ts,
        delivery_ts=request_ts + map_model.latency,
        pose_used=T_W_C,
        image=render(map_model, T_W_C),
        visible_ids=np.asarray(map_model.ids)[idx],
        visible_uv=uv,
    )
    logger.debug(
        f"Rendered frame at t={request_ts:.3f} with {len(idx)} landmarks in view"
    )
    return frame


def associate_corners(
    corners: np.ndarray,
    visible_ids: np.ndarray,
    visible_uv: np.ndarray,
    max_distance: float = 2.0,
) -> List[Tuple[int, np.ndarray]]:
    """
    Match detected corners to projected landmarks.

    Each landmark takes its nearest corner within ``max_distance`` pixels;
    a corner serves at most one landmark.

    :param np.ndarray corners: (M, 2) corner pixels
    :param np.ndarray visible_ids: (K,) landmark ids in view
    :param np.ndarray visible_uv: (K, 2) their projections
    :param float max_distance: Association radius, px
    :return: ``(landmark id, corner pixel)`` pairs sorted by id
    :rtype: List[Tuple[int, np.ndarray]]
    """
    corners = np.asarray(corners, dtype=float).reshape(-1, 2)
    if len(corners) == 0 or len(visible_ids) == 0:
        return []
    dist = np.linalg.norm(visible_uv[:, None, :] - corners[None, :, :], axis=2)
    pairs = []
    taken = set()
    for k in np.argsort(dist.min(axis=1), kind="stable"):
        j = int(np.argmin(dist[k]))
        if dist[k, j] <= max_distance and j not in taken:
            taken.add(j)
            pairs.append((int(visible_ids[k]), corners[j]))
    return sorted(pairs, key=lambda pair: pair[0])


def visible_in_cells(
    uv: np.ndarray, accepted: np.ndarray, image_shape: Tuple[int, int]
) -> np.ndarray:
    """Boolean mask of pixels that fall in accepted grid cells."""
    uv = np.atleast_2d(np.asarray(uv, dtype=float))
    if uv.size == 0:
        return np.zeros(0, dtype=bool)
    rows, cols = accepted.shape
    height, width = image_shape
    r_edges = (np.arange(rows + 1) * height) // rows
    c_edges = (np.arange(cols + 1) * width) // cols
    u = np.clip(np.round(uv[:, 0]), 0, width - 1)
    v = np.clip(np.round(uv[:, 1]), 0, height - 1)
    ci = np.searchsorted(c_edges, u, side="right") - 1
    ri = np.searchsorted(r_edges, v, side="right") - 1
    return accepted[ri, ci]


def altered_cells(
    mask: np.ndarray, grid: Tuple[int, int], coverage: float = 0.6
) -> np.ndarray:
    """
    Grid cells mostly covered by a pixel mask.

    :param np.ndarray mask: (H, W) boolean mask
    :param grid: ``(rows, cols)`` of the grid
    :type grid: Tuple[int, int]
    :param float coverage: Minimum covered fraction
    :return: (rows, cols) boolean mask
    :rtype: np.ndarray
    """
    out = np.zeros(grid, dtype=bool)
    for (r, c), (rs, cs) in cell_slices(mask.shape, grid):
        out[r, c] = mask[rs, cs].mean() >= coverage
    return out


def cell_slices(
    image_shape: Tuple[int, int], grid: Tuple[int, int]
) -> List[Tuple[Tuple[int, int], Tuple[slice, slice]]]:
    """
    Row and column slices of every grid cell.

    Cell boundaries are ``floor(k * size / n)`` so cells differ by at most one
    pixel.
    """
    height, width = image_shape
    rows, cols = grid
    r_edges = (np.arange(rows + 1) * height) // rows
    c_edges = (np.arange(cols + 1) * width) // cols
    return [
        ((r, c), (slice(r_edges[r], r_edges[r + 1]), slice(c_edges[c], c_edges[c + 1])))
        for r in range(rows)
        for c in range(cols)
    ]
