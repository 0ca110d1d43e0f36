"""
Exception classes for Map VIO.

This module defines all custom exceptions used throughout the package.

The exception hierarchy is:

- MapVioError: Base exception for all package errors
  - ConfigValidationError: Experiment configuration parsing or validation failures
  - GeometryError: Invalid rotations, poses, tangent matrices or metric parameters
    - LogDegeneracyError: Group logarithm requested too close to a half turn
  - PropagationError: IMU propagation and covariance bookkeeping failures
  - TriangulationError: Feature triangulation failures
  - UpdateError: Measurement update failures
  - ModelError: Initialization model and checkpoint failures
  - MapError: Prior map file, rendering and image comparison failures
  - ExperimentError: Failures escaping the event loop, tagged with virtual time

All exceptions inherit from MapVioError to allow for broad exception handling
while still providing specific error types for detailed error handling.
"""

from typing import Optional


class MapVioError(Exception):
    """
    Base exception for Map VIO errors.

    All other package exceptions inherit from this base class.
    """

    pass


class ConfigValidationError(MapVioError):
    """
    Exception raised when an experiment configuration is invalid.

    Covers unknown sections or keys, wrong value types and out-of-range values.
    """

    pass


class GeometryError(MapVioError):
    """
    Exception raised for invalid SO(3)/SE(3) inputs.

    Indicates a non-unit quaternion, a non-orthonormal rotation, a malformed
    tangent matrix or a metric parameter outside the unit ball.
    """

    pass


class LogDegeneracyError(GeometryError):
    """
    Exception raised when a logarithm is taken at a rotation angle near pi.

    The rotation axis is not unique there, so no canonical twist exists.
    """

    pass


class PropagationError(MapVioError):
    """
    Exception raised when IMU propagation or window bookkeeping fails.

    Indicates a non-positive or oversized time step, a covariance that is not
    positive semi-definite, or a clone window overflow.
    """

    pass


class TriangulationError(MapVioError):
    """
    Exception raised when a feature cannot be triangulated.

    Indicates too few observations, insufficient baseline or parallax,
    divergence, or a reprojection error above the gate.
    """

    pass


class UpdateError(MapVioError):
    """
    Exception raised when a measurement update cannot be applied.

    Indicates a singular innovation matrix or a missing clone.
    """

    pass


class ModelError(MapVioError):
    """
    Exception raised for initialization model failures.

    Indicates a dimension mismatch, an incompatible checkpoint or a
    diverging training run.
    """

    def __init__(self, message: str, epoch: Optional[int] = None):
        super().__init__(message)
        self.epoch = epoch


class MapError(MapVioError):
    """
    Exception raised for prior map failures.

    Indicates a malformed or incompatible map file, mismatched image
    dimensions or a diverging photometric refinement.
    """

    pass


class ExperimentError(MapVioError):
    """
    Exception raised when an experiment run fails.

    Carries the virtual timestamp of the event that failed.
    """

    def __init__(self, message: str, timestamp: Optional[float] = None):
        if timestamp is not None:
            message = f"{message} (at t={timestamp:.6f} s)"
        super().__init__(message)
        self.timestamp = timestamp
