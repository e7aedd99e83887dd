"""Per-point motion correction into the world frame.

The corrected cloud is already expressed in the world frame through the
IMU-propagated trajectory, so it is used directly as the registration prior.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import TimedPointCloud, rotate_points
from .preprocess import Extrinsics, lidar_to_robot
from .propagation import DiscreteTrajectory, knot_poses, query_poses

CLAMP_WARN_FRACTION = 0.01


class DeskewMode(str, Enum):
    NONE = "none"
    DISCRETE = "discrete"
    CONTINUOUS = "continuous"


@dataclass(frozen=True)
class DeskewResult:
    cloud: TimedPointCloud
    n_clamped: int
    warning: bool


def _poses_for(mode: DeskewMode, traj: DiscreteTrajectory, times: np.ndarray):
    if mode is DeskewMode.CONTINUOUS:
        return query_poses(traj, times, clamp=True)
    return knot_poses(traj, times, clamp=True)


def _transform_chunk(mode, traj, stamp, xyz, dt):
    p, q, n = _poses_for(mode, traj, stamp + dt)
    return rotate_points(q, xyz) + p, n


def deskew_mode(
    cloud: TimedPointCloud,
    traj: DiscreteTrajectory,
    mode: DeskewMode | str = DeskewMode.CONTINUOUS,
    workers: int = 1,
) -> DeskewResult:
    """Transform robot-frame points into the world frame.

    ``none`` applies the pose at the sweep start to every point,
    ``discrete`` the nearest preceding knot pose and ``continuous`` the
    closed-form pose at each point's own time. Points outside the trajectory
    span are clamped to its ends and counted.

    ``workers > 1`` splits the points into contiguous chunks evaluated in a
    thread pool; each point's result depends only on its own inputs so the
    output is identical to the serial path.
    """
    mode = DeskewMode(mode)
    n = len(cloud)
    if n == 0:
        return DeskewResult(cloud, 0, False)
    if mode is DeskewMode.NONE:
        p, q, _ = query_poses(traj, np.array([cloud.stamp]), clamp=True)
        out = rotate_points(q, cloud.xyz) + p
        times = cloud.stamp + cloud.dt
        n_clamped = int(np.count_nonzero((times < traj.start - 1e-9) | (times > traj.end + 1e-9)))
    elif workers <= 1 or n < 2 * workers:
        out, n_clamped = _transform_chunk(mode, traj, cloud.stamp, cloud.xyz, cloud.dt)
    else:
        bounds = np.linspace(0, n, workers + 1).astype(int)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(
                pool.map(
                    lambda ab: _transform_chunk(mode, traj, cloud.stamp, cloud.xyz[ab[0] : ab[1]], cloud.dt[ab[0] : ab[1]]),
                    zip(bounds[:-1], bounds[1:]),
                )
            )
        out = np.concatenate([p for p, _ in parts])
        n_clamped = sum(c for _, c in parts)
    return DeskewResult(TimedPointCloud(cloud.stamp, out, cloud.dt), n_clamped, n_clamped > CLAMP_WARN_FRACTION * n)


def deskew_scan(
    cloud: TimedPointCloud,
    traj: DiscreteTrajectory,
    lidar_ext: Extrinsics | None = None,
    workers: int = 1,
) -> DeskewResult:
    """Continuous-time correction of a sweep.

    If ``lidar_ext`` is given the cloud is taken to be in the LiDAR frame and
    is first moved into the robot frame.
    """
    if lidar_ext is not None:
        cloud = lidar_to_robot(cloud, lidar_ext)
    return deskew_mode(cloud, traj, DeskewMode.CONTINUOUS, workers=workers)
