import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ctlio.core import ImuSample, Pose, Quaternion, TimedPointCloud
from ctlio.preprocess import Extrinsics, FilterSpec, StampError, compensate_lever_arm, filter_cloud, lidar_to_robot
from ctlio.simulator import TrajectorySpec, sample_imu


class TestLeverArm:
    def test_zero_offset_is_rotation_only(self, rng):
        q = Quaternion.from_axis_angle((0, 1, 1), 0.4)
        ext = Extrinsics(imu_to_robot=Pose(np.zeros(3), q))
        s = ImuSample(1.0, rng.standard_normal(3), rng.standard_normal(3))
        out = compensate_lever_arm(s, ext, ImuSample(0.9, np.zeros(3), np.zeros(3)))
        assert np.allclose(out.accel, q.to_matrix() @ s.accel, atol=1e-14)
        assert np.allclose(out.gyro, q.to_matrix() @ s.gyro, atol=1e-14)

    def test_pure_spin_centripetal(self):
        ext = Extrinsics(imu_to_robot=Pose([1.0, 0, 0]))
        a_in = np.array([0.3, -0.2, 9.8])
        prev = ImuSample(0.0, a_in, [0, 0, 1.0])
        out = compensate_lever_arm(ImuSample(0.01, a_in, [0, 0, 1.0]), ext, prev)
        # ω×(ω×r) = (-1, 0, 0) by hand
        assert np.allclose(out.accel, a_in + [1.0, 0, 0], atol=1e-15)
        assert np.array_equal(out.gyro, [0, 0, 1.0])

    def test_identity_and_zero_rate_unchanged(self):
        s = ImuSample(0.5, [1.0, 2.0, 3.0], [0, 0, 0])
        out = compensate_lever_arm(s, Extrinsics(), ImuSample(0.4, [0, 0, 0], [0, 0, 0]))
        assert np.array_equal(out.accel, s.accel) and np.array_equal(out.gyro, s.gyro)

    def test_constant_rate_subtracts_only_centripetal(self):
        r = np.array([0.2, -0.1, 0.05])
        w = np.array([0.3, -0.5, 1.2])
        ext = Extrinsics(imu_to_robot=Pose(r))
        s0, s1 = ImuSample(0.0, [0, 0, 0], w), ImuSample(0.01, [0, 0, 0], w)
        out = compensate_lever_arm(s1, ext, s0)
        assert np.array_equal(out.gyro, w)
        assert np.allclose(out.accel, -np.cross(w, np.cross(w, r)), atol=1e-15)

    def test_first_sample_uses_zero_alpha(self):
        ext = Extrinsics(imu_to_robot=Pose([0.0, 1.0, 0.0]))
        out = compensate_lever_arm(ImuSample(0.0, [0, 0, 0], [0, 0, 2.0]), ext)
        assert np.allclose(out.accel, [0, 4.0, 0], atol=1e-15)

    def test_tangential_term(self):
        r = np.array([1.0, 0, 0])
        ext = Extrinsics(imu_to_robot=Pose(r))
        out = compensate_lever_arm(ImuSample(0.1, [0, 0, 0], [0, 0, 0.1]), ext, ImuSample(0.0, [0, 0, 0], [0, 0, 0]))
        alpha = np.array([0, 0, 1.0])
        w = np.array([0, 0, 0.1])
        assert np.allclose(out.accel, -np.cross(alpha, r) - np.cross(w, np.cross(w, r)), atol=1e-15)

    def test_matches_simulated_offset_imu(self):
        # constant body rate so the finite-difference α is exact
        spec = TrajectorySpec("aggressive_spin", 2.0, pos_amp=(1.0, 0.5, 0.1), pos_freq=(0.3, 0.2, 0.1), rot_rate=(0.0, 0.0, 2.5))
        mount = Pose([0.3, -0.2, 0.1], Quaternion.from_euler(0.1, -0.2, 0.5))
        at_robot = sample_imu(spec, 100)
        at_imu = sample_imu(spec, 100, imu_to_robot=mount)
        ext = Extrinsics(imu_to_robot=mount)
        for k in range(1, len(at_imu)):
            out = compensate_lever_arm(at_imu[k], ext, at_imu[k - 1])
            assert np.allclose(out.accel, at_robot[k].accel, atol=1e-11)
            assert np.allclose(out.gyro, at_robot[k].gyro, atol=1e-12)

    @pytest.mark.parametrize("dt", [0.0, -0.01])
    def test_non_monotonic_rejected(self, dt):
        with pytest.raises(StampError):
            compensate_lever_arm(ImuSample(1.0 + dt, [0, 0, 0], [0, 0, 0]), Extrinsics(), ImuSample(1.0, [0, 0, 0], [0, 0, 0]))


class TestFilter:
    def test_everything_inside_box(self):
        c = TimedPointCloud(0.0, [[0.1, 0.2, -0.3], [0.4, 0.0, 0.0]], [0.0, 0.01])
        out, empty = filter_cloud(c, FilterSpec(0.5, 0.25))
        assert empty and len(out) == 0

    def test_disabled_is_identity(self, rng):
        c = TimedPointCloud(0.0, rng.standard_normal((50, 3)), np.sort(rng.uniform(0, 0.1, 50)))
        out, empty = filter_cloud(c, FilterSpec(0.0, 0.0))
        assert not empty
        assert np.array_equal(out.xyz, c.xyz) and np.array_equal(out.dt, c.dt)

    def test_first_in_time_survives(self):
        c = TimedPointCloud(0.0, [[2.05, 2.05, 2.05], [2.1, 2.1, 2.1]], [0.03, 0.01])
        out, _ = filter_cloud(c, FilterSpec(0.5, 0.25))
        assert len(out) == 1
        assert out.dt[0] == 0.01 and np.array_equal(out.xyz[0], [2.1, 2.1, 2.1])

    def test_box_boundary(self):
        c = TimedPointCloud(0.0, [[0.5, 0, 0], [0.49, 0.49, -0.49]], [0.0, 0.0])
        out, _ = filter_cloud(c, FilterSpec(0.5, 0.0))
        assert np.array_equal(out.xyz, [[0.5, 0, 0]])

    def test_invalid_spec(self):
        with pytest.raises(ValueError):
            FilterSpec(-1.0, 0.1)

    @given(
        arrays(np.float64, (40, 3), elements=st.floats(-5, 5)),
        arrays(np.float64, 40, elements=st.floats(0, 0.1)),
        st.sampled_from([0.0, 0.1, 0.5, 1.0]),
    )
    def test_subset_and_sorted(self, xyz, dt, leaf):
        c = TimedPointCloud(0.0, xyz, dt)
        out, _ = filter_cloud(c, FilterSpec(0.5, leaf))
        rows = {tuple(r) + (t,) for r, t in zip(c.xyz, c.dt)}
        assert all(tuple(r) + (t,) in rows for r, t in zip(out.xyz, out.dt))
        assert np.all(np.diff(out.dt) >= 0)
        if leaf > 0:
            keys = np.floor(out.xyz / leaf)
            assert len(np.unique(keys, axis=0)) == len(out)

    def test_lidar_to_robot(self):
        ext = Extrinsics(lidar_to_robot=Pose([0, 0, 1.0], Quaternion.from_axis_angle((0, 0, 1), np.pi / 2)))
        c = TimedPointCloud(0.0, [[1.0, 0, 0]], [0.0])
        assert np.allclose(lidar_to_robot(c, ext).xyz, [[0, 1, 1]], atol=1e-15)
