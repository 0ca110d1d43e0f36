"""
Lie-group arithmetic for rotations and rigid transforms.

This package provides:

- JPL quaternion conversions and SO(3) exponential/logarithm
- SE(3) poses and twists with closed-form exponential/logarithm
- The left-invariant metric family and the geodesic distance on SE(3)
"""

from .se3 import (
    MetricParam,
    Pose,
    Twist,
    geodesic_dist_sq,
    inner_closed,
    inner_trace,
    left_jacobian,
    metric_block,
    metric_matrix,
    right_jacobian,
    se3_exp,
    se3_log,
    tangent_to_twist,
)
from .so3 import (
    UnitQuaternion,
    check_rotation,
    quat_to_rot,
    rot_to_quat,
    rotation_angle,
    skew,
    so3_exp,
    so3_log,
    vee,
)

__all__ = [
    "MetricParam",
    "Pose",
    "Twist",
    "UnitQuaternion",
    "check_rotation",
    "geodesic_dist_sq",
    "inner_closed",
    "inner_trace",
    "left_jacobian",
    "metric_block",
    "metric_matrix",
    "quat_to_rot",
    "right_jacobian",
    "rot_to_quat",
    "rotation_angle",
    "se3_exp",
    "se3_log",
    "skew",
    "so3_exp",
    "so3_log",
    "tangent_to_twist",
    "vee",
]
