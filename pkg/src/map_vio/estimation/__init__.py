"""
Sliding-window visual-inertial estimation.

This package provides:

- IMU mean and covariance propagation
- The filter state with pose clones and their covariance bookkeeping
- Pinhole projection and multi-view triangulation
- Captured and rendered feature updates
"""

from .camera import Intrinsics, project, projection_jacobian
from .imu import (
    DEFAULT_GRAVITY,
    ImuSample,
    ImuState,
    NoiseParams,
    attitude_error,
    check_covariance,
    error_state_jacobians,
    interpolate_sample,
    propagate_covariance,
    propagate_mean,
)
from .msckf import (
    CAPTURED,
    RENDERED,
    FeatureTrack,
    UpdateConfig,
    UpdateReport,
    captured_update,
    inflate_noise,
    inflate_noise_counted,
    rendered_update,
    select_closest_clone,
)
from .state import (
    CameraCalibration,
    Clone,
    FilterState,
    add_slam_feature,
    apply_correction,
    clone_state,
    initial_covariance,
    marginalize,
    remove_slam_feature,
    transform_to_camera,
)
from .triangulation import TriangulationConfig, linear_triangulate, triangulate

__all__ = [
    "CAPTURED",
    "DEFAULT_GRAVITY",
    "RENDERED",
    "CameraCalibration",
    "Clone",
    "FeatureTrack",
    "FilterState",
    "ImuSample",
    "ImuState",
    "Intrinsics",
    "NoiseParams",
    "TriangulationConfig",
    "UpdateConfig",
    "UpdateReport",
    "add_slam_feature",
    "apply_correction",
    "attitude_error",
    "captured_update",
    "check_covariance",
    "clone_state",
    "error_state_jacobians",
    "inflate_noise",
    "inflate_noise_counted",
    "initial_covariance",
    "interpolate_sample",
    "linear_triangulate",
    "marginalize",
    "project",
    "projection_jacobian",
    "propagate_covariance",
    "propagate_mean",
    "remove_slam_feature",
    "rendered_update",
    "select_closest_clone",
    "transform_to_camera",
    "triangulate",
]
