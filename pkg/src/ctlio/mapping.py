"""Keyframe map: admission, k-nearest submap extraction and export."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Pose, TimedPointCloud, quat_mul
from .gicp import PointCovariances
from .preprocess import voxel_first_in_time


@dataclass(frozen=True)
class Keyframe:
    pose: Pose
    cloud: TimedPointCloud
    covariances: PointCovariances
    id: int = -1

    def __post_init__(self):
        if len(self.cloud) == 0:
            raise ValueError("keyframe cloud is empty")
        if len(self.covariances) != len(self.cloud):
            raise ValueError("covariances are not parallel to the cloud")


@dataclass
class KeyframeMap:
    keyframes: list[Keyframe] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.keyframes)

    @property
    def next_id(self) -> int:
        return self.keyframes[-1].id + 1 if self.keyframes else 0

    def positions(self) -> np.ndarray:
        return np.array([k.pose.position for k in self.keyframes]).reshape(-1, 3)

    def n_points(self) -> int:
        return sum(len(k.cloud) for k in self.keyframes)


@dataclass(frozen=True)
class KeyframeThresholds:
    dist: float = 1.0
    angle: float = np.deg2rad(30.0)


def relative_angle(a: Pose, b: Pose) -> float:
    return quat_mul(a.orientation.conjugate(), b.orientation).angle()


def is_keyframe(pose: Pose, kmap: KeyframeMap, thresholds: KeyframeThresholds = KeyframeThresholds()) -> bool:
    """Admit a pose when it is far from every keyframe or rotated away from the nearest one."""
    if len(kmap) == 0:
        return True
    d = np.linalg.norm(kmap.positions() - pose.position, axis=1)
    nearest = int(np.argmin(d))
    if d[nearest] >= thresholds.dist:
        return True
    return relative_angle(kmap.keyframes[nearest].pose, pose) >= thresholds.angle


def insert_keyframe(kmap: KeyframeMap, keyframe: Keyframe) -> KeyframeMap:
    kf = Keyframe(keyframe.pose, keyframe.cloud, keyframe.covariances, kmap.next_id)
    return KeyframeMap(kmap.keyframes + [kf])


def nearest_keyframes(kmap: KeyframeMap, pose: Pose, n_nearest: int) -> list[Keyframe]:
    d = np.linalg.norm(kmap.positions() - pose.position, axis=1)
    ids = np.array([k.id for k in kmap.keyframes])
    order = np.lexsort((ids, d))[:n_nearest]
    return [kmap.keyframes[i] for i in order]


def extract_submap(kmap: KeyframeMap, pose: Pose, n_nearest: int = 10) -> tuple[TimedPointCloud, PointCovariances]:
    """Concatenate the clouds and cached covariances of the nearest keyframes.

    Keyframes are ranked by position distance with ties broken by lower id;
    the chosen ones are concatenated in id order, so the same selection
    always yields the same cloud.
    """
    if len(kmap) == 0:
        raise ValueError("cannot extract a submap from an empty map")
    chosen = sorted(nearest_keyframes(kmap, pose, n_nearest), key=lambda k: k.id)
    xyz = np.concatenate([k.cloud.xyz for k in chosen])
    # world-frame points from several sweeps: per-point offsets carry no meaning
    cloud = TimedPointCloud(chosen[0].cloud.stamp, xyz, np.zeros(len(xyz)))
    return cloud, PointCovariances.concatenate(k.covariances for k in chosen)


def export_map(kmap: KeyframeMap, voxel_leaf: float = 0.0) -> TimedPointCloud:
    if len(kmap) == 0:
        return TimedPointCloud.empty()
    xyz = np.concatenate([k.cloud.xyz for k in kmap.keyframes])
    if voxel_leaf > 0:
        idx = voxel_first_in_time(xyz, np.zeros(len(xyz)), voxel_leaf)
        xyz = xyz[idx]
    return TimedPointCloud(kmap.keyframes[0].cloud.stamp, xyz, np.zeros(len(xyz)))


def write_ply(path, xyz: np.ndarray) -> None:
    """Binary little-endian PLY with float32 x, y, z."""
    xyz = np.ascontiguousarray(np.asarray(xyz, dtype="<f4").reshape(-1, 3))
    header = (
        "ply\n"
        "format binary_little_endian 1.0\n"
        f"element vertex {len(xyz)}\n"
        "property float x\n"
        "property float y\n"
        "property float z\n"
        "end_header\n"
    )
    with open(Path(path), "wb") as f:
        f.write(header.encode("ascii"))
        f.write(xyz.tobytes())


def read_ply(path) -> np.ndarray:
    data = Path(path).read_bytes()
    end = data.index(b"end_header\n") + len(b"end_header\n")
    header = data[:end].decode("ascii").splitlines()
    if "format binary_little_endian 1.0" not in header:
        raise ValueError("only binary little-endian PLY is supported")
    n = next(int(h.split()[-1]) for h in header if h.startswith("element vertex"))
    return np.frombuffer(data[end:], dtype="<f4", count=3 * n).reshape(n, 3).astype(float)
