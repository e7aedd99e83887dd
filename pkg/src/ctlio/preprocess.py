"""Bring raw IMU samples and LiDAR sweeps into the robot frame and filter clouds."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ImuSample, Pose, TimedPointCloud, quat_rotate


class StampError(ValueError):
    """Raised for IMU samples whose stamp does not advance."""


@dataclass(frozen=True)
class Extrinsics:
    lidar_to_robot: Pose = field(default_factory=Pose.identity)
    imu_to_robot: Pose = field(default_factory=Pose.identity)


@dataclass(frozen=True)
class FilterSpec:
    box_half_extent: float = 0.5
    voxel_leaf: float = 0.25

    def __post_init__(self):
        if self.box_half_extent < 0 or self.voxel_leaf < 0:
            raise ValueError("filter sizes must be non-negative")


def compensate_lever_arm(sample: ImuSample, ext: Extrinsics, prev: ImuSample | None = None) -> ImuSample:
    """Express an IMU sample at the robot origin.

    The accelerometer reading is rotated into the robot frame and the
    tangential (``α × r``) and centripetal (``ω × (ω × r)``) terms caused by
    the IMU offset ``r`` are removed. ``α`` is a backward difference against
    ``prev`` (already in the IMU frame, like ``sample``); without ``prev`` it
    is taken as zero.
    """
    if prev is not None and not sample.stamp > prev.stamp:
        raise StampError(f"IMU stamp {sample.stamp} does not follow {prev.stamp}")
    q = ext.imu_to_robot.orientation
    r = ext.imu_to_robot.position
    gyro = quat_rotate(q, sample.gyro)
    accel = quat_rotate(q, sample.accel)
    if not np.any(r):
        return ImuSample(sample.stamp, accel, gyro)
    if prev is None:
        alpha = np.zeros(3)
    else:
        alpha = (gyro - quat_rotate(q, prev.gyro)) / (sample.stamp - prev.stamp)
    accel = accel - np.cross(alpha, r) - np.cross(gyro, np.cross(gyro, r))
    return ImuSample(sample.stamp, accel, gyro)


def lidar_to_robot(cloud: TimedPointCloud, ext: Extrinsics) -> TimedPointCloud:
    if len(cloud) == 0:
        return cloud
    return cloud.with_xyz(ext.lidar_to_robot.transform_points(cloud.xyz))


def voxel_first_in_time(xyz: np.ndarray, dt: np.ndarray, leaf: float) -> np.ndarray:
    """Indices of the earliest point in each occupied voxel, in input order.

    ``dt`` must already be sorted; ties keep the lower index.
    """
    keys = np.floor(xyz / leaf).astype(np.int64)
    # np.unique returns the first occurrence of each key, which for
    # dt-sorted input is the earliest point in that voxel.
    _, first = np.unique(keys, axis=0, return_index=True)
    return np.sort(first)


def filter_cloud(cloud: TimedPointCloud, spec: FilterSpec) -> tuple[TimedPointCloud, bool]:
    """Crop the robot box and voxel-downsample.

    Returns ``(filtered, is_empty)``. Points with ``max(|x|,|y|,|z|)`` below
    ``box_half_extent`` are dropped; the survivors keep their timestamps.
    """
    xyz, dt = cloud.xyz, cloud.dt
    if spec.box_half_extent > 0 and len(dt):
        keep = np.max(np.abs(xyz), axis=1) >= spec.box_half_extent
        xyz, dt = xyz[keep], dt[keep]
    if spec.voxel_leaf > 0 and len(dt):
        idx = voxel_first_in_time(xyz, dt, spec.voxel_leaf)
        xyz, dt = xyz[idx], dt[idx]
    out = TimedPointCloud(cloud.stamp, xyz, dt)
    return out, len(out) == 0
