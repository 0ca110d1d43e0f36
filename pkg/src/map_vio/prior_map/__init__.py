"""
Prior map of the scene.

This package provides:

- A deterministic renderer of landmark blobs over a shaded room
- The versioned map file
- Grid SSIM between rendered and captured images
- FAST-9 corner detection and corner-to-landmark association
- The virtual-time render schedule
"""

from .fast import fast_detect
from .map_file import load_map, map_from_dict, map_to_dict, save_map
from .map_model import (
    ChangeRegion,
    MapModel,
    RenderedFrame,
    altered_cells,
    associate_corners,
    board_mask,
    cell_slices,
    project_landmarks,
    render,
    render_frame,
    visible_in_cells,
)
from .schedule import RenderEvent, schedule_renders, validate_rates
from .ssim import ssim_grid, ssim_grid_filter

__all__ = [
    "ChangeRegion",
    "MapModel",
    "RenderEvent",
    "RenderedFrame",
    "altered_cells",
    "associate_corners",
    "board_mask",
    "cell_slices",
    "fast_detect",
    "load_map",
    "map_from_dict",
    "map_to_dict",
    "project_landmarks",
    "render",
    "render_frame",
    "save_map",
    "schedule_renders",
    "ssim_grid",
    "ssim_grid_filter",
    "validate_rates",
    "visible_in_cells",
]
