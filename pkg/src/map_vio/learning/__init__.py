"""
Learned relocalization for filter initialization.

This package provides:

- A fully connected pose regression network with explicit backpropagation
- The geodesic training loss, its gradient and a seeded SGD trainer
- First IMU pose composition and the stationary velocity/bias bootstrap
- Versioned checkpoints and synthetic training data from the prior map
"""

from .dataset import build_dataset, nominal_camera_pose, sample_poses
from .init_model import (
    InitResult,
    TrainConfig,
    TrainSample,
    bootstrap_vel_bias,
    compose_first_imu,
    dataset_loss,
    forward,
    forward_many,
    frame_covariance,
    gravity_align,
    init_from_pose,
    initialize,
    load_checkpoint,
    loss_and_grad,
    pose_errors,
    preprocess,
    relocalize,
    save_checkpoint,
    timed_relocalize,
    train,
    validation_variance,
)
from .mlp import Layer, MlpModel, backward_batch, forward_batch

__all__ = [
    "InitResult",
    "Layer",
    "MlpModel",
    "TrainConfig",
    "TrainSample",
    "backward_batch",
    "bootstrap_vel_bias",
    "build_dataset",
    "compose_first_imu",
    "dataset_loss",
    "forward",
    "forward_batch",
    "forward_many",
    "frame_covariance",
    "gravity_align",
    "init_from_pose",
    "initialize",
    "load_checkpoint",
    "loss_and_grad",
    "nominal_camera_pose",
    "pose_errors",
    "preprocess",
    "relocalize",
    "sample_poses",
    "save_checkpoint",
    "timed_relocalize",
    "train",
    "validation_variance",
]
