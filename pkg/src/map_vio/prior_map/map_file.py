"""
Prior-map file.

The map is stored as YAML with a format version, the rendering camera, the
render latency, one row per landmark and the optional change regions. The
grammar is documented in ``docs/formats.md``.
"""

import logging
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from ..config_reader import ConfigReader
from ..definitions import MAP_FORMAT_VERSION
from ..estimation import Intrinsics
from ..exceptions import ConfigValidationError, MapError
from .map_model import ChangeRegion, MapModel

logger = logging.getLogger(__name__)

TOP_LEVEL_KEYS = {
    "FormatVersion",
    "Intrinsics",
    "Latency",
    "RoomHalfSize",
    "Landmarks",
    "ChangeRegions",
}


def map_to_dict(map_model: MapModel) -> Dict[str, Any]:
    """Plain-data form of a map, ready for YAML."""
    K = map_model.intrinsics
    return {
        "FormatVersion": MAP_FORMAT_VERSION,
        "Intrinsics": {
            "Width": int(K.width),
            "Height": int(K.height),
            "Focal": float(K.focal),
            "Cx": float(K.cx),
            "Cy": float(K.cy),
        },
        "Latency": float(map_model.latency),
        "RoomHalfSize": float(map_model.room_half_size),
        "Landmarks": [
            [int(i), *map(float, p), float(a), float(r)]
            for i, p, a, r in zip(
                map_model.ids,
                map_model.positions,
                map_model.amplitudes,
                map_model.radii,
            )
        ],
        "ChangeRegions": [
            {
                "Lower": [float(x) for x in region.lower],
                "Upper": [float(x) for x in region.upper],
                "Displacement": [float(x) for x in region.displacement],
            }
            for region in map_model.change_regions
        ],
    }


def map_from_dict(data: Dict[str, Any]) -> MapModel:
    """
    Build a map from its plain-data form.

    :param data: Parsed map file
    :type data: Dict[str, Any]
    :return: Map
    :rtype: MapModel
    :raises MapError: On a version mismatch or malformed content
    """
    version = data.get("FormatVersion")
    if version != MAP_FORMAT_VERSION:
        raise MapError(
            f"Map format version {version!r} is not supported "
            f"(expected {MAP_FORMAT_VERSION})"
        )
    unknown = set(data) - TOP_LEVEL_KEYS
    if unknown:
        raise MapError(f"Unknown map file keys {sorted(unknown)}")

    try:
        k = data["Intrinsics"]
        intrinsics = Intrinsics(
            int(k["Width"]), int(k["Height"]), float(k["Focal"]), float(k["Cx"]), float(k["Cy"])
        )
        rows = np.asarray(data.get("Landmarks", []), dtype=float).reshape(-1, 6)
        regions = tuple(
            ChangeRegion(r["Lower"], r["Upper"], r["Displacement"])
            for r in data.get("ChangeRegions", [])
        )
        return MapModel(
            intrinsics=intrinsics,
            ids=rows[:, 0].astype(int),
            positions=rows[:, 1:4],
            amplitudes=rows[:, 4],
            radii=rows[:, 5],
            latency=float(data["Latency"]),
            room_half_size=float(data["RoomHalfSize"]),
            change_regions=regions,
        )
    except MapError:
        raise
    except (KeyError, TypeError, ValueError, ConfigValidationError) as e:
        raise MapError(f"Malformed map file: {e}") from e


def save_map(map_model: MapModel, path: Union[str, Path]) -> None:
    """Write a map file, keeping a backup of an existing one."""
    ConfigReader().write_config(map_to_dict(map_model), path, backup=True)
    logger.info(f"Wrote map with {len(map_model)} landmarks to {path}")


def load_map(path: Union[str, Path]) -> MapModel:
    """
    Read a map file.

    :param path: YAML map file
    :type path: Union[str, Path]
    :return: Map
    :rtype: MapModel
    :raises MapError: If the file is missing, unparsable or malformed
    """
    try:
        data = ConfigReader().read_config(path)
    except ConfigValidationError as e:
        raise MapError(f"Cannot read map file {path}") from e
    map_model = map_from_dict(data)
    logger.debug(f"Loaded map with {len(map_model)} landmarks from {path}")
    return map_model
