import numpy as np
import pytest
from conftest import true_state
from scipy.spatial.distance import pdist

from ctlio.core import GRAVITY, ImuSample, Pose, Quaternion, RobotState, TimedPointCloud
from ctlio.deskew import DeskewMode, deskew_mode, deskew_scan
from ctlio.preprocess import Extrinsics, lidar_to_robot
from ctlio.propagation import integrate_imu, query_pose
from ctlio.simulator import LidarSpec, SceneSpec, TrajectorySpec, render_sweep, sample_imu


def rmse(a, b):
    return float(np.sqrt(np.mean(np.sum((a - b) ** 2, axis=1))))


def simulated_sweep(spec, t0, lidar=LidarSpec(), rate=100):
    imu = sample_imu(spec, rate)
    i0 = int(round(t0 * rate))
    r = render_sweep(spec, SceneSpec.box_room(), lidar, imu[i0].stamp)
    traj = integrate_imu(true_state(spec, imu[i0].stamp), imu[i0 : i0 + int(round(lidar.period * rate)) + 1])
    return r, traj


def random_cloud(rng, n=500, stamp=0.0, period=0.1):
    return TimedPointCloud(stamp, rng.uniform(-10, 10, (n, 3)), np.sort(rng.uniform(0, period, n)))


@pytest.fixture(scope="module")
def aggressive():
    return simulated_sweep(TrajectorySpec.aggressive_spin(), 7.3)


@pytest.fixture
def moving_traj():
    q = Quaternion.from_axis_angle((0.1, 0.2, 1.0), 0.3)
    start = RobotState([1.0, 2.0, 0.5], q, [1.0, -0.5, 0.2])
    s = [ImuSample(0.01 * k, [0.3 * np.sin(k), 0.1, 9.9], [0.1, -0.2, 3.0 + 0.1 * k]) for k in range(12)]
    return integrate_imu(start, s)


class TestDeskew:
    def test_stationary_is_single_rigid_transform(self, rng):
        pose = Pose([1.0, -2.0, 0.3], Quaternion.from_euler(0.0, 0.0, 0.7))
        start = RobotState(pose.position, pose.orientation)
        g_body = pose.orientation.conjugate().to_matrix() @ -GRAVITY
        traj = integrate_imu(start, [ImuSample(0.01 * k, g_body, [0, 0, 0]) for k in range(11)])
        c = random_cloud(rng)
        out = deskew_scan(c, traj)
        assert np.allclose(out.cloud.xyz, pose.transform_points(c.xyz), atol=1e-12)
        assert np.array_equal(out.cloud.dt, c.dt) and out.n_clamped == 0

    def test_same_dt_same_transform(self, moving_traj):
        xyz = np.array([[1.0, 0, 0], [0, 2.0, 0], [0, 0, 3.0]])
        c = TimedPointCloud(0.0, xyz, [0.042] * 3)
        out = deskew_scan(c, moving_traj).cloud.xyz
        pose = query_pose(moving_traj, 0.042)
        assert np.allclose(out, pose.transform_points(xyz), atol=1e-12)

    def test_rigid_per_timestamp(self, rng, moving_traj):
        xyz = rng.uniform(-30, 30, (40, 3))
        c = TimedPointCloud(0.0, xyz, np.repeat([0.013, 0.077], 20))
        out = deskew_scan(c, moving_traj).cloud.xyz
        for sl in (slice(0, 20), slice(20, 40)):
            assert np.abs(pdist(out[sl]) - pdist(xyz[sl])).max() < 1e-12

    def test_preserves_order_and_offsets(self, rng, moving_traj):
        c = random_cloud(rng)
        out = deskew_scan(c, moving_traj).cloud
        assert np.array_equal(out.dt, c.dt) and out.stamp == c.stamp

    def test_matches_reference_sinusoid(self):
        spec = TrajectorySpec.sinusoid_loop()
        for t0 in [3.0, 9.4, 17.2, 24.6]:
            r, traj = simulated_sweep(spec, t0)
            assert rmse(deskew_scan(r.distorted, traj).cloud.xyz, r.reference.xyz) < 1e-4

    def test_lidar_extrinsics(self, rng, moving_traj):
        ext = Extrinsics(lidar_to_robot=Pose([0.1, 0, 0.3], Quaternion.from_axis_angle((1, 0, 0), 0.2)))
        c = random_cloud(rng)
        a = deskew_scan(c, moving_traj, ext).cloud.xyz
        b = deskew_scan(lidar_to_robot(c, ext), moving_traj).cloud.xyz
        assert np.array_equal(a, b)

    def test_clamping_counted(self, moving_traj):
        c = TimedPointCloud(0.0, np.ones((200, 3)), np.r_[np.full(197, 0.05), np.full(3, 0.5)])
        out = deskew_scan(c, moving_traj)
        assert out.n_clamped == 3 and out.warning
        end = query_pose(moving_traj, moving_traj.end).transform_points(np.ones((1, 3)))
        assert np.allclose(out.cloud.xyz[-3:], end, atol=1e-12)
        assert not deskew_scan(TimedPointCloud(0.0, np.ones((200, 3)), np.r_[np.full(198, 0.05), np.full(2, 0.5)]), moving_traj).warning

    def test_empty_cloud(self, moving_traj):
        out = deskew_scan(TimedPointCloud.empty(), moving_traj)
        assert len(out.cloud) == 0 and out.n_clamped == 0


class TestModes:
    def test_static_scene_modes_agree(self):
        spec = TrajectorySpec.static(2.0, roll=0.05, pitch=-0.1)
        r, traj = simulated_sweep(spec, 0.5)
        outs = [deskew_mode(r.distorted, traj, m).cloud.xyz for m in DeskewMode]
        for o in outs:
            assert np.allclose(o, outs[0], atol=1e-12)
            assert rmse(o, r.reference.xyz) < 1e-9

    def test_none_uses_sweep_start_pose(self, rng, moving_traj):
        c = random_cloud(rng, stamp=0.0)
        out = deskew_mode(c, moving_traj, "none").cloud.xyz
        assert np.allclose(out, query_pose(moving_traj, 0.0).transform_points(c.xyz), atol=1e-12)

    def test_discrete_uses_preceding_knot(self, moving_traj):
        c = TimedPointCloud(0.0, [[1.0, 2.0, 3.0]] * 2, [0.0349, 0.04])
        out = deskew_mode(c, moving_traj, "discrete").cloud.xyz
        assert np.allclose(out[0], moving_traj.knot_pose(3).transform_points(np.array([[1.0, 2.0, 3.0]]))[0], atol=1e-12)
        assert np.allclose(out[1], moving_traj.knot_pose(4).transform_points(np.array([[1.0, 2.0, 3.0]]))[0], atol=1e-12)

    def test_aggressive_ordering(self, aggressive):
        r, traj = aggressive
        err = {m: rmse(deskew_mode(r.distorted, traj, m).cloud.xyz, r.reference.xyz) for m in DeskewMode}
        assert err[DeskewMode.CONTINUOUS] < err[DeskewMode.DISCRETE] <= err[DeskewMode.NONE]

    @pytest.mark.parametrize("workers", [2, 3, 8])
    @pytest.mark.parametrize("mode", list(DeskewMode))
    def test_parallel_bit_identical(self, aggressive, workers, mode):
        r, traj = aggressive
        serial = deskew_mode(r.distorted, traj, mode, workers=1)
        par = deskew_mode(r.distorted, traj, mode, workers=workers)
        assert serial.cloud.xyz.tobytes() == par.cloud.xyz.tobytes()
        assert serial.n_clamped == par.n_clamped

    def test_unknown_mode(self, moving_traj, rng):
        with pytest.raises(ValueError):
            deskew_mode(random_cloud(rng), moving_traj, "spline")
