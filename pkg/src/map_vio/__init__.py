"""
Map VIO

A Python package for visual-inertial odometry aided by a prior map that is
rendered and compared against the camera as the platform moves.

This package provides:

- SO(3)/SE(3) arithmetic with a left-invariant metric family
- A sliding-window filter with captured and rendered feature updates
- A prior map renderer with SSIM change detection and FAST corners
- A learned relocalization network for filter initialization
- Deterministic synthetic scenarios, metrics and a command-line harness
"""

__version__ = "0.1.0"
__license__ = "BSD"

from .config_reader import ConfigReader, load_experiment_config
from .core import ExperimentRunner

__all__ = [
    "ConfigReader",
    "ExperimentRunner",
    "load_experiment_config",
]
