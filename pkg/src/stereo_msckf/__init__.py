"""Stereo multi-state constraint Kalman filter for visual-inertial odometry."""

from .filter import Msckf
from .options import FilterConfig
from .propagation import ImuSample, propagate
from .state import (
    FilterState,
    ImuState,
    NoiseParams,
    PriorCovariance,
    StereoExtrinsics,
    initial_state,
)

__all__ = [
    "FilterConfig", "FilterState", "ImuSample", "ImuState", "Msckf", "NoiseParams",
    "PriorCovariance", "StereoExtrinsics", "initial_state", "propagate",
]
__version__ = "0.1.0"
