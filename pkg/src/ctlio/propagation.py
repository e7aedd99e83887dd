"""Coarse-to-fine trajectory over a sweep.

``integrate_imu`` builds discrete knots at the IMU sample times with a
constant-jerk position model and a quaternion update carrying first-order
(angular velocity) and second-order (angular acceleration) terms.
``query_pose`` then evaluates the same polynomials at an arbitrary time from
the closest preceding knot, so any point timestamp gets its own transform.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    GRAVITY,
    ImuSample,
    Pose,
    Quaternion,
    RobotState,
    normalize_quats,
    quat_mul_vec,
    rotate_points,
)

STAMP_TOL = 1e-9


class TrajectoryError(ValueError):
    """Invalid IMU input for trajectory construction."""


class OutOfRangeError(ValueError):
    """Query time outside the span of a trajectory."""


@dataclass(frozen=True)
class TrajectoryKnot:
    stamp: float
    position: np.ndarray
    velocity: np.ndarray
    orientation: Quaternion
    world_accel: np.ndarray
    jerk: np.ndarray
    body_gyro: np.ndarray
    ang_accel: np.ndarray


class DiscreteTrajectory:
    """Knots stored column-wise.

    ``jerk[i]`` and ``ang_accel[i]`` hold the values estimated over the
    interval ``(i, i+1)`` (the successive-measurement differences), so
    evaluating knot ``i``'s polynomial at ``τ = t[i+1] - t[i]`` reproduces
    knot ``i+1``. The last knot repeats the final interval's values.
    """

    def __init__(self, stamps, position, velocity, orientation, world_accel, jerk, body_gyro, ang_accel):
        self.stamps = np.asarray(stamps, dtype=float)
        self.position = np.asarray(position, dtype=float)
        self.velocity = np.asarray(velocity, dtype=float)
        self.orientation = np.asarray(orientation, dtype=float)
        self.world_accel = np.asarray(world_accel, dtype=float)
        self.jerk = np.asarray(jerk, dtype=float)
        self.body_gyro = np.asarray(body_gyro, dtype=float)
        self.ang_accel = np.asarray(ang_accel, dtype=float)
        if len(self.stamps) < 2:
            raise TrajectoryError("a trajectory needs at least two knots")
        if np.any(np.diff(self.stamps) <= 0):
            raise TrajectoryError("knot stamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.stamps)

    @property
    def start(self) -> float:
        return float(self.stamps[0])

    @property
    def end(self) -> float:
        return float(self.stamps[-1])

    @property
    def knots(self) -> list[TrajectoryKnot]:
        return [
            TrajectoryKnot(
                float(self.stamps[i]),
                self.position[i],
                self.velocity[i],
                Quaternion.from_array(self.orientation[i]),
                self.world_accel[i],
                self.jerk[i],
                self.body_gyro[i],
                self.ang_accel[i],
            )
            for i in range(len(self))
        ]

    def knot_pose(self, i: int) -> Pose:
        return Pose(self.position[i], Quaternion.from_array(self.orientation[i]))

    def last_pose(self) -> Pose:
        return self.knot_pose(len(self) - 1)

    def evaluate(self, i, tau) -> tuple[np.ndarray, np.ndarray]:
        """Knot ``i``'s polynomial at offset ``tau`` (arrays broadcast)."""
        i = np.asarray(i)
        tau = np.asarray(tau, dtype=float)[..., None]
        return _step(
            self.position[i],
            self.velocity[i],
            self.orientation[i],
            self.world_accel[i],
            self.body_gyro[i],
            self.jerk[i],
            self.ang_accel[i],
            tau,
        )

    def preceding_index(self, t: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.stamps, t + STAMP_TOL, side="right") - 1
        return np.clip(idx, 0, len(self) - 1)


def _step(p, v, q, acc_prev, w_prev, jerk, alpha, dt):
    """One knot-to-knot (or knot-to-query) evaluation; shared by both paths."""
    p_new = p + v * dt + 0.5 * acc_prev * dt**2 + jerk * dt**3 / 6.0
    q_new = q + 0.5 * quat_mul_vec(q, w_prev) * dt + 0.25 * quat_mul_vec(q, alpha) * dt**2
    return p_new, normalize_quats(q_new)


def integrate_imu(start: RobotState, samples: Sequence[ImuSample]) -> DiscreteTrajectory:
    """Integrate bias-corrected IMU samples forward from ``start``.

    The first knot sits at ``start.stamp`` and uses the latest sample at or
    before it (or the first sample if none precedes it). Every later sample
    adds one knot. Samples must be time-ordered.
    """
    if len(samples) < 2:
        raise TrajectoryError("need at least two IMU samples")
    stamps = np.array([s.stamp for s in samples])
    if np.any(np.diff(stamps) <= 0):
        raise TrajectoryError("IMU samples must have strictly increasing stamps")
    t0 = start.stamp
    before = np.nonzero(stamps <= t0 + STAMP_TOL)[0]
    first = int(before[-1]) if len(before) else 0
    later = [s for s in samples[first + 1 :] if s.stamp > t0 + STAMP_TOL]
    if not later:
        raise TrajectoryError("no IMU samples after the start state")
    meas = [samples[first]] + later
    t = np.array([t0] + [s.stamp for s in later])
    acc_b = np.array([s.accel for s in meas]) - start.accel_bias
    gyr_b = np.array([s.gyro for s in meas]) - start.gyro_bias

    m = len(t)
    pos = np.empty((m, 3))
    vel = np.empty((m, 3))
    quat = np.empty((m, 4))
    wacc = np.empty((m, 3))
    jerk = np.zeros((m, 3))
    alpha = np.zeros((m, 3))
    pos[0] = start.position
    vel[0] = start.velocity
    quat[0] = start.orientation.normalized().to_array()
    wacc[0] = rotate_points(quat[0], acc_b[0]) + GRAVITY
    for i in range(1, m):
        dt = t[i] - t[i - 1]
        alpha[i - 1] = (gyr_b[i] - gyr_b[i - 1]) / dt
        # orientation first: the jerk estimate needs q_i
        q_i = normalize_quats(
            quat[i - 1]
            + 0.5 * quat_mul_vec(quat[i - 1], gyr_b[i - 1]) * dt
            + 0.25 * quat_mul_vec(quat[i - 1], alpha[i - 1]) * dt**2
        )
        wacc[i] = rotate_points(q_i, acc_b[i]) + GRAVITY
        jerk[i - 1] = (wacc[i] - wacc[i - 1]) / dt
        pos[i], quat[i] = _step(pos[i - 1], vel[i - 1], quat[i - 1], wacc[i - 1], gyr_b[i - 1], jerk[i - 1], alpha[i - 1], dt)
        vel[i] = vel[i - 1] + wacc[i - 1] * dt
    jerk[-1] = jerk[-2]
    alpha[-1] = alpha[-2]
    return DiscreteTrajectory(t, pos, vel, quat, wacc, jerk, gyr_b, alpha)


def query_poses(traj: DiscreteTrajectory, times, clamp: bool = False) -> tuple[np.ndarray, np.ndarray, int]:
    """Vectorised continuous-time query.

    Returns ``(positions (N,3), quaternions (N,4), n_clamped)``. With
    ``clamp`` False any out-of-span time raises ``OutOfRangeError``.
    """
    times = np.asarray(times, dtype=float)
    lo, hi = traj.stamps[0] - STAMP_TOL, traj.stamps[-1] + STAMP_TOL
    outside = (times < lo) | (times > hi)
    n_out = int(np.count_nonzero(outside))
    if n_out:
        if not clamp:
            raise OutOfRangeError(f"{n_out} query times outside [{traj.start}, {traj.end}]")
        times = np.clip(times, traj.stamps[0], traj.stamps[-1])
    i = traj.preceding_index(times)
    tau = np.maximum(times - traj.stamps[i], 0.0)
    p, q = traj.evaluate(i, tau)
    at_knot = tau == 0.0
    if np.any(at_knot):
        p[at_knot] = traj.position[i[at_knot]]
        q[at_knot] = traj.orientation[i[at_knot]]
    return p, q, n_out


def query_pose(traj: DiscreteTrajectory, t: float) -> Pose:
    """Pose at time ``t`` from the closest preceding knot."""
    p, q, _ = query_poses(traj, np.array([t]))
    return Pose(p[0], Quaternion.from_array(q[0]))


def knot_poses(traj: DiscreteTrajectory, times, clamp: bool = False) -> tuple[np.ndarray, np.ndarray, int]:
    """Pose of the nearest preceding knot for each time (no polynomial refinement)."""
    times = np.asarray(times, dtype=float)
    outside = (times < traj.stamps[0] - STAMP_TOL) | (times > traj.stamps[-1] + STAMP_TOL)
    n_out = int(np.count_nonzero(outside))
    if n_out and not clamp:
        raise OutOfRangeError(f"{n_out} query times outside [{traj.start}, {traj.end}]")
    i = traj.preceding_index(np.clip(times, traj.stamps[0], traj.stamps[-1]))
    return traj.position[i].copy(), traj.orientation[i].copy(), n_out
