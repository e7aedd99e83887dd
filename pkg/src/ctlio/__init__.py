"""LiDAR-inertial odometry with coarse-to-fine continuous-time deskewing."""

from .core import GRAVITY, ImuSample, Pose, Quaternion, RobotState, TimedPointCloud
from .deskew import DeskewMode, deskew_scan
from .gicp import GicpParams, align
from .observer import Observer, ObserverGains
from .pipeline import OdometryRecord, Pipeline, PipelineConfig, run_live, run_offline
from .propagation import integrate_imu, query_pose

__version__ = "0.1.0"

__all__ = [
    "GRAVITY",
    "DeskewMode",
    "GicpParams",
    "ImuSample",
    "Observer",
    "ObserverGains",
    "OdometryRecord",
    "Pipeline",
    "PipelineConfig",
    "Pose",
    "Quaternion",
    "RobotState",
    "TimedPointCloud",
    "align",
    "deskew_scan",
    "integrate_imu",
    "query_pose",
    "run_live",
    "run_offline",
]
