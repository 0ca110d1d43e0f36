"""Image and tabular helpers shared by the map, learning and harness code."""

from .csv_io import (
    features_frame,
    imu_frame,
    read_trajectory,
    trajectory_frame,
    write_table,
)
from .image import ImagePlane, area_downsample

__all__ = [
    "ImagePlane",
    "area_downsample",
    "features_frame",
    "imu_frame",
    "read_trajectory",
    "trajectory_frame",
    "write_table",
]
