import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ctlio.core import Pose, Quaternion, TimedPointCloud
from ctlio.gicp import PointCovariances
from ctlio.mapping import (
    Keyframe,
    KeyframeMap,
    KeyframeThresholds,
    export_map,
    extract_submap,
    insert_keyframe,
    is_keyframe,
    nearest_keyframes,
    read_ply,
    write_ply,
)


def make_kf(x, n=5, seed=0, yaw=0.0):
    rng = np.random.default_rng(seed)
    xyz = rng.uniform(-1, 1, (n, 3)) + [x, 0, 0]
    return Keyframe(Pose([x, 0, 0], Quaternion.from_axis_angle((0, 0, 1), yaw)), TimedPointCloud(0.0, xyz, np.zeros(n)), PointCovariances.identity(n))


def build(xs):
    kmap = KeyframeMap()
    for i, x in enumerate(xs):
        kmap = insert_keyframe(kmap, make_kf(x, seed=i))
    return kmap


def rows(xyz):
    return sorted(map(tuple, np.asarray(xyz)))


class TestAdmission:
    def test_empty_map(self):
        assert is_keyframe(Pose.identity(), KeyframeMap())

    def test_same_pose(self):
        kmap = build([0.0])
        assert not is_keyframe(kmap.keyframes[0].pose, kmap)

    def test_distance(self):
        kmap = build([0.0])
        assert is_keyframe(Pose([1.1, 0, 0]), kmap, KeyframeThresholds(1.0, np.pi))
        assert not is_keyframe(Pose([0.9, 0, 0]), kmap, KeyframeThresholds(1.0, np.pi))

    def test_rotation(self):
        kmap = build([0.0])
        th = KeyframeThresholds(1.0, np.deg2rad(30.0))
        assert is_keyframe(Pose([0.1, 0, 0], Quaternion.from_axis_angle((0, 0, 1), np.deg2rad(31))), kmap, th)
        assert not is_keyframe(Pose([0.1, 0, 0], Quaternion.from_axis_angle((0, 0, 1), np.deg2rad(29))), kmap, th)

    def test_rotation_checked_against_nearest(self):
        kmap = KeyframeMap()
        kmap = insert_keyframe(kmap, make_kf(0.0, yaw=0.0))
        kmap = insert_keyframe(kmap, make_kf(0.8, yaw=np.deg2rad(40)))
        pose = Pose([0.7, 0, 0], Quaternion.from_axis_angle((0, 0, 1), np.deg2rad(35)))
        assert not is_keyframe(pose, kmap)


class TestMap:
    def test_insert(self):
        kmap = insert_keyframe(KeyframeMap(), make_kf(0.0))
        assert len(kmap) == 1 and kmap.keyframes[0].id == 0

    def test_ids_increase(self):
        kmap = build(np.arange(100.0))
        ids = [k.id for k in kmap.keyframes]
        assert ids == list(range(100))

    def test_point_count(self):
        kmap = KeyframeMap()
        for i, n in enumerate([5, 7, 11]):
            kmap = insert_keyframe(kmap, make_kf(float(i), n=n))
        assert kmap.n_points() == 23 and len(export_map(kmap)) == 23

    def test_keyframe_validation(self):
        with pytest.raises(ValueError):
            Keyframe(Pose.identity(), TimedPointCloud.empty(), PointCovariances.identity(0))
        with pytest.raises(ValueError):
            Keyframe(Pose.identity(), TimedPointCloud(0.0, np.zeros((3, 3)), np.zeros(3)), PointCovariances.identity(2))


class TestSubmap:
    def test_single_keyframe(self):
        kmap = build([0.0])
        cloud, cov = extract_submap(kmap, Pose([5.0, 0, 0]), 10)
        assert np.array_equal(cloud.xyz, kmap.keyframes[0].cloud.xyz) and len(cov) == 5

    def test_whole_map(self):
        kmap = build([0.0, 3.0, 7.0])
        cloud, _ = extract_submap(kmap, Pose.identity(), 5)
        assert rows(cloud.xyz) == rows(export_map(kmap).xyz)

    def test_collinear(self):
        kmap = build([0.0, 10.0, 20.0])
        chosen = nearest_keyframes(kmap, Pose([1.0, 0, 0]), 2)
        assert sorted(k.pose.position[0] for k in chosen) == [0.0, 10.0]
        cloud, _ = extract_submap(kmap, Pose([1.0, 0, 0]), 2)
        assert np.array_equal(cloud.xyz, np.concatenate([kmap.keyframes[0].cloud.xyz, kmap.keyframes[1].cloud.xyz]))

    def test_tie_break_lower_id(self):
        kmap = build([-2.0, 2.0])
        chosen = nearest_keyframes(kmap, Pose.identity(), 1)
        assert chosen[0].id == 0

    def test_empty_map(self):
        with pytest.raises(ValueError):
            extract_submap(KeyframeMap(), Pose.identity(), 3)

    @given(st.permutations(list(range(6))), st.integers(1, 6))
    def test_insertion_order_invariant(self, order, n):
        xs = [0.0, 1.3, 2.9, 4.4, 7.1, 9.6]
        kfs = [make_kf(x, seed=i) for i, x in enumerate(xs)]
        a = KeyframeMap()
        for k in kfs:
            a = insert_keyframe(a, k)
        b = KeyframeMap()
        for i in order:
            b = insert_keyframe(b, kfs[i])
        ca, _ = extract_submap(a, Pose([3.3, 0, 0]), n)
        cb, _ = extract_submap(b, Pose([3.3, 0, 0]), n)
        assert rows(ca.xyz) == rows(cb.xyz)


class TestExport:
    def test_empty(self):
        assert len(export_map(KeyframeMap())) == 0

    def test_voxel(self):
        xyz = np.array([[1.0, 1.0, 1.0], [1.5, 1.2, 1.9]])
        kf = Keyframe(Pose.identity(), TimedPointCloud(0.0, xyz, np.zeros(2)), PointCovariances.identity(2))
        kmap = insert_keyframe(insert_keyframe(KeyframeMap(), kf), kf)
        assert len(export_map(kmap, 0.0)) == 4
        out = export_map(kmap, 10.0)
        assert len(out) == 1 and np.array_equal(out.xyz[0], xyz[0])

    def test_ply_round_trip(self, tmp_path, rng):
        xyz = rng.uniform(-100, 100, (57, 3))
        write_ply(tmp_path / "m.ply", xyz)
        data = (tmp_path / "m.ply").read_bytes()
        assert data.startswith(b"ply\nformat binary_little_endian 1.0\nelement vertex 57\n")
        assert len(data) == data.index(b"end_header\n") + 11 + 57 * 12
        assert np.array_equal(read_ply(tmp_path / "m.ply"), xyz.astype(np.float32).astype(float))
