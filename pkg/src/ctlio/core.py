"""Geometric primitives and the state/measurement types shared by every module.

Quaternions use the Hamilton convention and are stored ``(w, x, y, z)``.
Alongside the value types there is a small set of vectorised helpers working
on ``(N, 4)`` quaternion arrays and ``(N, 3)`` point arrays; they are written
element-wise so results never depend on how an array is chunked.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, NamedTuple

import numpy as np

GRAVITY = np.array([0.0, 0.0, -9.80665])
GRAVITY_NORM = 9.80665


@dataclass(frozen=True)
class Quaternion:
    w: float = 1.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    @classmethod
    def identity(cls) -> "Quaternion":
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_array(cls, a) -> "Quaternion":
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]))

    @classmethod
    def from_axis_angle(cls, axis, angle: float) -> "Quaternion":
        axis = np.asarray(axis, dtype=float)
        n = np.linalg.norm(axis)
        if n == 0.0 or angle == 0.0:
            return cls.identity()
        s = np.sin(0.5 * angle) / n
        return cls(float(np.cos(0.5 * angle)), float(axis[0] * s), float(axis[1] * s), float(axis[2] * s))

    @classmethod
    def from_rotvec(cls, rv) -> "Quaternion":
        rv = np.asarray(rv, dtype=float)
        return cls.from_axis_angle(rv, float(np.linalg.norm(rv)))

    @classmethod
    def from_euler(cls, roll: float, pitch: float, yaw: float) -> "Quaternion":
        """Z-Y-X (yaw, pitch, roll) intrinsic convention."""
        qz = cls.from_axis_angle((0, 0, 1), yaw)
        qy = cls.from_axis_angle((0, 1, 0), pitch)
        qx = cls.from_axis_angle((1, 0, 0), roll)
        return quat_mul(quat_mul(qz, qy), qx)

    @classmethod
    def from_matrix(cls, R) -> "Quaternion":
        return cls.from_array(matrix_to_quat(np.asarray(R, dtype=float)))

    def to_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])

    @property
    def vec(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def norm(self) -> float:
        return float(np.sqrt(self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z))

    def normalized(self) -> "Quaternion":
        n = self.norm()
        return Quaternion(self.w / n, self.x / n, self.y / n, self.z / n)

    def conjugate(self) -> "Quaternion":
        return Quaternion(self.w, -self.x, -self.y, -self.z)

    def inverse(self) -> "Quaternion":
        n2 = self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z
        c = self.conjugate()
        return Quaternion(c.w / n2, c.x / n2, c.y / n2, c.z / n2)

    def to_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.to_array())

    def angle(self) -> float:
        """Rotation angle in [0, pi]."""
        return float(2.0 * np.arctan2(np.linalg.norm(self.vec), abs(self.w)))

    def __mul__(self, other: "Quaternion") -> "Quaternion":
        return quat_mul(self, other)


def quat_mul(a: Quaternion, b: Quaternion) -> Quaternion:
    """Hamilton product ``a ⊗ b``."""
    return Quaternion(
        a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
        a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
        a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
    )


def quat_rotate(q: Quaternion, v) -> np.ndarray:
    """Rotate ``v`` by unit quaternion ``q`` (``R(q) @ v``)."""
    return rotate_points(q.to_array()[None, :], np.asarray(v, dtype=float)[None, :])[0]


# ---------------------------------------------------------------------------
# vectorised helpers


def quat_mul_arr(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_mul_vec(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``q ⊗ (0, v)`` for quaternion array ``q`` and pure vector ``v``."""
    qw, qx, qy, qz = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    vx, vy, vz = v[..., 0], v[..., 1], v[..., 2]
    return np.stack(
        [
            -qx * vx - qy * vy - qz * vz,
            qw * vx + qy * vz - qz * vy,
            qw * vy - qx * vz + qz * vx,
            qw * vz + qx * vy - qy * vx,
        ],
        axis=-1,
    )


def normalize_quats(q: np.ndarray) -> np.ndarray:
    n = np.sqrt(q[..., 0] ** 2 + q[..., 1] ** 2 + q[..., 2] ** 2 + q[..., 3] ** 2)
    return q / n[..., None]


def rotate_points(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vectors ``v`` (N,3) by unit quaternions ``q`` (N,4) or (1,4).

    Uses ``v + 2w(u×v) + 2u×(u×v)`` element-wise so that the output for a
    point does not depend on its neighbours in the array.
    """
    w = q[..., 0]
    ux, uy, uz = q[..., 1], q[..., 2], q[..., 3]
    vx, vy, vz = v[..., 0], v[..., 1], v[..., 2]
    tx = 2.0 * (uy * vz - uz * vy)
    ty = 2.0 * (uz * vx - ux * vz)
    tz = 2.0 * (ux * vy - uy * vx)
    return np.stack(
        [
            vx + w * tx + (uy * tz - uz * ty),
            vy + w * ty + (uz * tx - ux * tz),
            vz + w * tz + (ux * ty - uy * tx),
        ],
        axis=-1,
    )


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - w * z)
    R[..., 0, 2] = 2 * (x * z + w * y)
    R[..., 1, 0] = 2 * (x * y + w * z)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - w * x)
    R[..., 2, 0] = 2 * (x * z - w * y)
    R[..., 2, 1] = 2 * (y * z + w * x)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def matrix_to_quat(R: np.ndarray) -> np.ndarray:
    """Shepperd's method; returns (w, x, y, z) with w >= 0."""
    m = R
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2
        q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
    elif m[1, 1] > m[2, 2]:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
    else:
        s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    q /= np.linalg.norm(q)
    return -q if q[0] < 0 else q


def skew(v) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def so3_exp(rv) -> np.ndarray:
    """Rodrigues' formula for a rotation vector."""
    rv = np.asarray(rv, dtype=float)
    theta = np.linalg.norm(rv)
    K = skew(rv)
    if theta < 1e-12:
        return np.eye(3) + K
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / (theta * theta)
    return np.eye(3) + a * K + b * (K @ K)


def so3_log(R: np.ndarray) -> np.ndarray:
    q = Quaternion.from_matrix(R)
    n = np.linalg.norm(q.vec)
    if n < 1e-15:
        return 2.0 * q.vec
    return 2.0 * np.arctan2(n, q.w) * q.vec / n


# ---------------------------------------------------------------------------
# poses and state


@dataclass(frozen=True)
class Pose:
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: Quaternion = field(default_factory=Quaternion.identity)

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_matrix(cls, T: np.ndarray) -> "Pose":
        return cls(T[:3, 3].copy(), Quaternion.from_matrix(T[:3, :3]))

    def as_matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.orientation.to_matrix()
        T[:3, 3] = self.position
        return T

    def inverse(self) -> "Pose":
        qi = self.orientation.conjugate()
        return Pose(-quat_rotate(qi, self.position), qi)

    def transform_points(self, pts: np.ndarray) -> np.ndarray:
        return rotate_points(self.orientation.to_array()[None, :], pts) + self.position

    def __matmul__(self, other: "Pose") -> "Pose":
        return pose_compose(self, other)


def pose_compose(a: Pose, b: Pose) -> Pose:
    """SE(3) composition ``a ∘ b`` (apply ``b`` first, then ``a``)."""
    return Pose(a.position + quat_rotate(a.orientation, b.position), quat_mul(a.orientation, b.orientation).normalized())


@dataclass(frozen=True)
class RobotState:
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: Quaternion = field(default_factory=Quaternion.identity)
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    accel_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gyro_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    stamp: float = 0.0

    def __post_init__(self):
        for name in ("position", "velocity", "accel_bias", "gyro_bias"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(3))

    @property
    def pose(self) -> Pose:
        return Pose(self.position, self.orientation)

    def replace(self, **changes) -> "RobotState":
        return replace(self, **changes)


@dataclass(frozen=True)
class ImuSample:
    stamp: float
    accel: np.ndarray
    gyro: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "accel", np.asarray(self.accel, dtype=float).reshape(3))
        object.__setattr__(self, "gyro", np.asarray(self.gyro, dtype=float).reshape(3))
        if not (np.isfinite(self.stamp) and np.all(np.isfinite(self.accel)) and np.all(np.isfinite(self.gyro))):
            raise ValueError("IMU sample has non-finite components")


class TimedPoint(NamedTuple):
    xyz: np.ndarray
    dt: float


@dataclass(frozen=True)
class TimedPointCloud:
    """One sweep: ``stamp`` is the sweep start, ``dt`` the per-point offsets.

    Points are stored as an ``(N, 3)`` array and kept sorted by ``dt``
    (stable sort on construction).
    """

    stamp: float
    xyz: np.ndarray
    dt: np.ndarray

    def __post_init__(self):
        xyz = np.asarray(self.xyz, dtype=float).reshape(-1, 3)
        dt = np.asarray(self.dt, dtype=float).reshape(-1)
        if len(xyz) != len(dt):
            raise ValueError(f"xyz has {len(xyz)} rows but dt has {len(dt)}")
        if len(dt) > 1 and np.any(np.diff(dt) < 0):
            order = np.argsort(dt, kind="stable")
            xyz, dt = xyz[order], dt[order]
        object.__setattr__(self, "xyz", xyz)
        object.__setattr__(self, "dt", dt)

    @classmethod
    def empty(cls, stamp: float = 0.0) -> "TimedPointCloud":
        return cls(stamp, np.zeros((0, 3)), np.zeros(0))

    @classmethod
    def from_points(cls, stamp: float, points) -> "TimedPointCloud":
        points = list(points)
        if not points:
            return cls.empty(stamp)
        return cls(stamp, np.array([p.xyz for p in points]), np.array([p.dt for p in points]))

    def __len__(self) -> int:
        return len(self.dt)

    @property
    def points(self) -> list[TimedPoint]:
        return [TimedPoint(x, float(t)) for x, t in zip(self.xyz, self.dt)]

    def __iter__(self) -> Iterator[TimedPoint]:
        return iter(self.points)

    def with_xyz(self, xyz: np.ndarray) -> "TimedPointCloud":
        return TimedPointCloud(self.stamp, xyz, self.dt)

    def select(self, mask_or_index) -> "TimedPointCloud":
        return TimedPointCloud(self.stamp, self.xyz[mask_or_index], self.dt[mask_or_index])
