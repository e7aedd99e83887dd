import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from scipy.interpolate import CubicSpline

from ctlio.core import Quaternion, RobotState
from ctlio.simulator import TrajectorySpec, ground_truth

settings.register_profile("ctlio", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ctlio")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_quat(rng) -> Quaternion:
    q = rng.standard_normal(4)
    return Quaternion.from_array(q / np.linalg.norm(q))


def rodrigues(axis, angle) -> np.ndarray:
    """Rotation matrix from axis-angle, written out independently of the package."""
    k = np.asarray(axis, float) / np.linalg.norm(axis)
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * K @ K


def true_state(spec: TrajectorySpec, t: float) -> RobotState:
    gt = ground_truth(spec, [t])
    return RobotState(gt.position[0], Quaternion.from_array(gt.orientation[0]), gt.velocity[0], stamp=t)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


G_WORLD = np.array([0.0, 0.0, -9.80665])


def _qmul(a, b):
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def _qrot(q, v):
    return _qmul(_qmul(q, np.r_[0.0, v]), q * [1, -1, -1, -1])[1:]


def dense_reintegrate(position, velocity, orientation, samples, step=1e-3):
    """Fixed-step RK4 of the rigid-body ODE driven by cubic-spline interpolated IMU readings.

    Written without the package's kinematics. Returns ``(times, positions, quaternions)``.
    """
    st = np.array([s.stamp for s in samples])
    acc = np.array([s.accel for s in samples])
    gyr = np.array([s.gyro for s in samples])

    acc_at, gyr_at = CubicSpline(st, acc), CubicSpline(st, gyr)

    def f(t, y):
        q = y[6:] / np.linalg.norm(y[6:])
        return np.concatenate([y[3:6], _qrot(q, acc_at(t)) + G_WORLD, 0.5 * _qmul(q, np.r_[0.0, gyr_at(t)])])

    n = int(round((st[-1] - st[0]) / step))
    times = st[0] + step * np.arange(n + 1)
    y = np.concatenate([position, velocity, orientation])
    out = [y]
    for t in times[:-1]:
        k1 = f(t, y)
        k2 = f(t + step / 2, y + step / 2 * k1)
        k3 = f(t + step / 2, y + step / 2 * k2)
        k4 = f(t + step, y + step * k3)
        y = y + step / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(y)
    out = np.array(out)
    q = out[:, 6:] / np.linalg.norm(out[:, 6:], axis=1, keepdims=True)
    return times, out[:, :3], q


def quat_angle_between(a, b) -> np.ndarray:
    """Rotation angle between unit quaternions, rowwise."""
    d = np.abs(np.sum(np.atleast_2d(a) * np.atleast_2d(b), axis=1))
    return 2 * np.arccos(np.clip(d, 0.0, 1.0))
