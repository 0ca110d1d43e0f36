"""
Deterministic synthetic data for desk-scale experiments.

This package provides:

- An analytic orbit trajectory around a table and its ground-truth samples
- IMU readings by inverse dynamics with white noise and random-walk biases
- Table and wall landmarks with pixel observations from the captured camera
"""

from .world import (
    CameraFrame,
    GroundTruth,
    Scene,
    Trajectory,
    TrajectorySpec,
    generate_scene,
    generate_truth,
    stream_rng,
    synthesize_camera,
    synthesize_imu,
    visible_landmarks,
)

__all__ = [
    "CameraFrame",
    "GroundTruth",
    "Scene",
    "Trajectory",
    "TrajectorySpec",
    "generate_scene",
    "generate_truth",
    "stream_rng",
    "synthesize_camera",
    "synthesize_imu",
    "visible_landmarks",
]
