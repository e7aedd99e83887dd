"""Hierarchical nonlinear geometric observer.

IMU samples propagate the state; each registered pose then corrects it.
The attitude and gyro-bias corrections use only the quaternion error and the
position, velocity and accelerometer-bias corrections only the position
error, so the two blocks are decoupled.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .core import GRAVITY, ImuSample, Pose, Quaternion, RobotState, quat_mul, quat_rotate
from .propagation import integrate_imu


@dataclass(frozen=True)
class ObserverGains:
    g1: float = 4.0
    g2: float = 10.0
    g3: float = 5.0
    g4: float = 12.0
    g5: float = 10.0

    def __post_init__(self):
        if min(self.as_tuple()) <= 0:
            raise ValueError("observer gains must be strictly positive")

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.g1, self.g2, self.g3, self.g4, self.g5)


@dataclass(frozen=True)
class PoseError:
    q_e: Quaternion
    p_e: np.ndarray


def propagate(state: RobotState, sample: ImuSample, dt: float, next_sample: ImuSample | None = None) -> RobotState:
    """Advance the state by ``dt`` from the bias-corrected ``sample``.

    Alone, the sample is held constant over the step. When the reading that
    closes the step is also known, pass it as ``next_sample``: the step then
    uses the angular acceleration and jerk between the two readings, exactly
    like one knot of :func:`~ctlio.propagation.integrate_imu`.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if next_sample is not None:
        pair = [ImuSample(state.stamp, sample.accel, sample.gyro), ImuSample(state.stamp + dt, next_sample.accel, next_sample.gyro)]
        traj = integrate_imu(state, pair)
        return state.replace(
            position=traj.position[1],
            velocity=traj.velocity[1],
            orientation=Quaternion.from_array(traj.orientation[1]),
            stamp=state.stamp + dt,
        )
    a = sample.accel - state.accel_bias
    w = sample.gyro - state.gyro_bias
    q = state.orientation
    acc = quat_rotate(q, a) + GRAVITY
    p = state.position + state.velocity * dt + 0.5 * acc * dt * dt
    v = state.velocity + acc * dt
    dq = quat_mul(q, Quaternion(0.0, *w))
    q_new = Quaternion(q.w + 0.5 * dq.w * dt, q.x + 0.5 * dq.x * dt, q.y + 0.5 * dq.y * dt, q.z + 0.5 * dq.z * dt)
    return state.replace(position=p, velocity=v, orientation=q_new.normalized(), stamp=state.stamp + dt)


def compute_error(propagated: Pose, measured: Pose) -> PoseError:
    """Quaternion error ``q_prop* ⊗ q_meas`` and position error ``p_meas - p_prop``."""
    q_e = quat_mul(propagated.orientation.conjugate(), measured.orientation)
    return PoseError(q_e, measured.position - propagated.position)


def update(state: RobotState, measured: Pose, dt_k: float, gains: ObserverGains = ObserverGains()) -> RobotState:
    """Correct the state with a registered pose ``dt_k`` seconds after the previous one."""
    if dt_k <= 0:
        raise ValueError("dt_k must be positive")
    err = compute_error(state.pose, measured)
    qe_w = err.q_e.w
    qe_v = err.q_e.vec
    sgn = 1.0 if qe_w >= 0 else -1.0
    q = state.orientation
    corr = quat_mul(q, Quaternion(1.0 - abs(qe_w), *(sgn * qe_v)))
    k = dt_k * gains.g1
    q_new = Quaternion(q.w + k * corr.w, q.x + k * corr.x, q.y + k * corr.y, q.z + k * corr.z).normalized()
    gyro_bias = state.gyro_bias - dt_k * gains.g2 * qe_w * qe_v

    p_e = err.p_e
    position = state.position + dt_k * gains.g3 * p_e
    velocity = state.velocity + dt_k * gains.g4 * p_e
    accel_bias = state.accel_bias - dt_k * gains.g5 * quat_rotate(q.conjugate(), p_e)
    return state.replace(
        position=position,
        orientation=q_new,
        velocity=velocity,
        accel_bias=accel_bias,
        gyro_bias=gyro_bias,
    )


class Observer:
    """Thread-safe holder for the shared state.

    All writes go through one lock so readers never see a half-applied
    update; ``snapshot`` returns the immutable current value.
    """

    def __init__(self, state: RobotState, gains: ObserverGains = ObserverGains()):
        self._state = state
        self.gains = gains
        self._lock = threading.Lock()

    def snapshot(self) -> RobotState:
        with self._lock:
            return self._state

    def set(self, state: RobotState) -> None:
        with self._lock:
            self._state = state

    def propagate(self, sample: ImuSample, dt: float, next_sample: ImuSample | None = None) -> RobotState:
        with self._lock:
            self._state = propagate(self._state, sample, dt, next_sample)
            return self._state

    def update(self, measured: Pose, dt_k: float) -> RobotState:
        with self._lock:
            self._state = update(self._state, measured, dt_k, self.gains)
            return self._state
