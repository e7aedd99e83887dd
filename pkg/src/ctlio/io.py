"""Dataset directories, trajectory files and key-value configuration.

A dataset directory holds::

    imu.csv            stamp_s,ax,ay,az,gx,gy,gz
    scans/index.csv    scan_id,stamp_s
    scans/NNNNNN.csv   x,y,z,dt_s
    ground_truth.csv   stamp_s,tx,ty,tz,qw,qx,qy,qz   (optional)
    meta               key = value

Trajectories are written in TUM order ``stamp tx ty tz qx qy qz qw``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .core import ImuSample, Pose, Quaternion, TimedPointCloud
from .pipeline import OdometryRecord, PipelineConfig
from .simulator import KINDS, LidarSpec, SceneSpec, SimNoiseSpec, TrajectorySpec

IMU_HEADER = ["stamp_s", "ax", "ay", "az", "gx", "gy", "gz"]
SCAN_HEADER = ["x", "y", "z", "dt_s"]
INDEX_HEADER = ["scan_id", "stamp_s"]
GT_HEADER = ["stamp_s", "tx", "ty", "tz", "qw", "qx", "qy", "qz"]
RECORD_HEADER = [
    "stamp_s", "tx", "ty", "tz", "qw", "qx", "qy", "qz",
    "vx", "vy", "vz", "bax", "bay", "baz", "bgx", "bgy", "bgz",
    "timing_ms", "iterations", "n_correspondences", "status", "keyframe",
]  # fmt: skip


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# key-value files


def read_key_values(path) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment. Duplicate keys are errors."""
    out: dict[str, str] = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or key in out:
            raise ConfigError(f"{path}:{n}: empty or duplicate key {key!r}")
        out[key] = value
    return out


def write_key_values(path, values: dict[str, object]) -> None:
    lines = [f"{k} = {_format_value(v)}" for k, v in values.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def _format_value(v) -> str:
    if isinstance(v, Pose):
        return " ".join(repr(float(x)) for x in (*v.position, *v.orientation.to_array()))
    if isinstance(v, (np.ndarray, list, tuple)):
        return " ".join(repr(float(x)) for x in np.ravel(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_pose(text: str) -> Pose:
    """``tx ty tz qw qx qy qz``."""
    vals = [float(x) for x in text.replace(",", " ").split()]
    if len(vals) != 7:
        raise ConfigError(f"pose needs 7 numbers (tx ty tz qw qx qy qz), got {len(vals)}")
    return Pose(np.array(vals[:3]), Quaternion(*vals[3:]).normalized())


def _parse_vec(text: str, n: int = 3) -> np.ndarray:
    vals = [float(x) for x in text.replace(",", " ").split()]
    if len(vals) != n:
        raise ConfigError(f"expected {n} numbers, got {len(vals)}")
    return np.array(vals)


def _parse_bool(text: str) -> bool:
    t = text.lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def config_from_dict(values: dict[str, str], base: PipelineConfig | None = None) -> PipelineConfig:
    """Build a ``PipelineConfig``; every field is addressable and unknown keys are errors."""
    base = base or PipelineConfig()
    known = {f.name: f for f in fields(PipelineConfig)}
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    kwargs = {}
    for key, text in values.items():
        default = getattr(base, key)
        try:
            if isinstance(default, Pose):
                kwargs[key] = parse_pose(text)
            elif isinstance(default, bool):
                kwargs[key] = _parse_bool(text)
            elif isinstance(default, int):
                kwargs[key] = int(text)
            elif isinstance(default, float):
                kwargs[key] = float(text)
            else:
                kwargs[key] = text
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from exc
    merged = {f: getattr(base, f) for f in known} | kwargs
    try:
        return PipelineConfig(**merged)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def read_config(path) -> PipelineConfig:
    return config_from_dict(read_key_values(path))


def write_config(path, config: PipelineConfig) -> None:
    write_key_values(path, {name: getattr(config, name) for name in PipelineConfig.field_names()})


# ---------------------------------------------------------------------------
# simulation scenario


@dataclass
class Scenario:
    trajectory: TrajectorySpec
    scene: SceneSpec
    lidar: LidarSpec = field(default_factory=LidarSpec)
    noise: SimNoiseSpec = field(default_factory=SimNoiseSpec)
    imu_rate: float = 100.0
    lidar_to_robot: Pose = field(default_factory=Pose.identity)
    imu_to_robot: Pose = field(default_factory=Pose.identity)


_PRESETS = {
    "static": TrajectorySpec.static,
    "aggressive_spin": TrajectorySpec.aggressive_spin,
    "sinusoid_loop": TrajectorySpec.sinusoid_loop,
}
_TRAJ_VECTORS = ("velocity", "accel", "pos_amp", "pos_freq", "pos_phase", "rot_amp", "rot_freq", "rot_phase", "rot_rate")
_TRAJ_SCALARS = ("duration", "preamble", "postamble", "ramp", "base_roll", "base_pitch")
_SCENARIO_KEYS = {
    "preset", "kind", "scene", "room_size", "room_height", "pillars", "wall_x",
    "imu_rate", "lidar_channels", "lidar_horiz_res", "lidar_rate", "lidar_max_range",
    "lidar_vfov_deg", "accel_noise_std", "gyro_noise_std", "accel_bias", "gyro_bias",
    "seed", "lidar_to_robot", "imu_to_robot", "ramp_out", *_TRAJ_VECTORS, *_TRAJ_SCALARS,
}  # fmt: skip


def scenario_from_dict(values: dict[str, str], seed: int | None = None) -> Scenario:
    """Scenario from key-value text.

    ``preset`` picks one of the built-in trajectories (``static``,
    ``aggressive_spin``, ``sinusoid_loop``); the remaining trajectory keys
    override its fields. Without a preset, ``kind`` and the fields are given
    directly.
    """
    unknown = sorted(set(values) - _SCENARIO_KEYS)
    if unknown:
        raise ConfigError(f"unknown scenario keys: {', '.join(unknown)}")
    v = dict(values)
    try:
        preset = v.pop("preset", None)
        if preset is not None and preset not in _PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(_PRESETS)}")
        base = _PRESETS[preset]() if preset else TrajectorySpec()
        traj = {f.name: getattr(base, f.name) for f in fields(TrajectorySpec)}
        if "kind" in v:
            if v["kind"] not in KINDS:
                raise ConfigError(f"unknown trajectory kind {v['kind']!r}")
            traj["kind"] = v.pop("kind")
        for k in _TRAJ_SCALARS:
            if k in v:
                traj[k] = float(v.pop(k))
        for k in _TRAJ_VECTORS:
            if k in v:
                traj[k] = _parse_vec(v.pop(k))
        if "ramp_out" in v:
            traj["ramp_out"] = _parse_bool(v.pop("ramp_out"))

        scene_kind = v.pop("scene", "box_room")
        if scene_kind == "box_room":
            scene = SceneSpec.box_room(
                float(v.pop("room_size", 20.0)), float(v.pop("room_height", 8.0)), _parse_bool(v.pop("pillars", "true"))
            )
        elif scene_kind == "single_wall":
            scene = SceneSpec.single_wall(float(v.pop("wall_x", 6.0)))
        else:
            raise ConfigError(f"unknown scene {scene_kind!r}")

        lidar = LidarSpec(
            int(v.pop("lidar_channels", 32)),
            int(v.pop("lidar_horiz_res", 512)),
            float(v.pop("lidar_rate", 10.0)),
            float(v.pop("lidar_max_range", 100.0)),
            tuple(_parse_vec(v.pop("lidar_vfov_deg", "-22.5 22.5"), 2)),
        )
        noise = SimNoiseSpec(
            float(v.pop("accel_noise_std", 0.0)),
            float(v.pop("gyro_noise_std", 0.0)),
            _parse_vec(v.pop("accel_bias", "0 0 0")),
            _parse_vec(v.pop("gyro_bias", "0 0 0")),
            int(seed if seed is not None else v.pop("seed", 0)),
        )
        v.pop("seed", None)
        return Scenario(
            TrajectorySpec(**traj),
            scene,
            lidar,
            noise,
            float(v.pop("imu_rate", 100.0)),
            parse_pose(v.pop("lidar_to_robot")) if "lidar_to_robot" in v else Pose.identity(),
            parse_pose(v.pop("imu_to_robot")) if "imu_to_robot" in v else Pose.identity(),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def read_scenario(path, seed: int | None = None) -> Scenario:
    return scenario_from_dict(read_key_values(path), seed)


# ---------------------------------------------------------------------------
# datasets


def _write_csv(path, header: Sequence[str], rows: np.ndarray, fmt: str) -> None:
    np.savetxt(path, rows, fmt=fmt, delimiter=",", header=",".join(header), comments="")


def _read_csv(path, header: Sequence[str]) -> np.ndarray:
    with open(path) as f:
        got = f.readline().strip().split(",")
    if got != list(header):
        raise ValueError(f"{path}: expected header {','.join(header)}, got {','.join(got)}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data.reshape(-1, len(header))


def write_imu(path, samples: Sequence[ImuSample]) -> None:
    rows = np.array([[s.stamp, *s.accel, *s.gyro] for s in samples]).reshape(-1, 7)
    _write_csv(path, IMU_HEADER, rows, "%.9f,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g")


def read_imu(path) -> list[ImuSample]:
    data = _read_csv(path, IMU_HEADER)
    return [ImuSample(float(r[0]), r[1:4], r[4:7]) for r in data]


def write_scan(path, cloud: TimedPointCloud) -> None:
    _write_csv(path, SCAN_HEADER, np.column_stack([cloud.xyz, cloud.dt]), "%.6f,%.6f,%.6f,%.9f")


def read_scan(path, stamp: float) -> TimedPointCloud:
    data = _read_csv(path, SCAN_HEADER)
    return TimedPointCloud(stamp, data[:, :3], data[:, 3])


def write_ground_truth(path, stamps, positions, quats) -> None:
    rows = np.column_stack([stamps, positions, quats])
    _write_csv(path, GT_HEADER, rows, "%.9f," + ",".join(["%.17g"] * 7))


def read_ground_truth(path):
    """``(stamps, positions, quats_wxyz)``."""
    data = _read_csv(path, GT_HEADER)
    return data[:, 0], data[:, 1:4], data[:, 4:8]


@dataclass
class Dataset:
    root: Path
    meta: dict[str, str]
    imu: list[ImuSample]
    scan_ids: np.ndarray
    scan_stamps: np.ndarray

    def scan_path(self, scan_id: int) -> Path:
        return self.root / "scans" / f"{int(scan_id):06d}.csv"

    def load_scan(self, i: int) -> TimedPointCloud:
        return read_scan(self.scan_path(self.scan_ids[i]), float(self.scan_stamps[i]))

    def scans(self) -> Iterator[TimedPointCloud]:
        for i in range(len(self.scan_ids)):
            yield self.load_scan(i)

    def __len__(self) -> int:
        return len(self.scan_ids)

    @property
    def ground_truth_path(self) -> Path:
        return self.root / "ground_truth.csv"

    def extrinsics_config(self) -> dict[str, str]:
        """Extrinsics recorded in ``meta``, as config overrides."""
        return {k: self.meta[k] for k in ("lidar_to_robot", "imu_to_robot") if k in self.meta}


def read_dataset(root) -> Dataset:
    root = Path(root)
    if not (root / "imu.csv").is_file() or not (root / "scans" / "index.csv").is_file():
        raise FileNotFoundError(f"{root} is not a dataset directory (missing imu.csv or scans/index.csv)")
    meta = read_key_values(root / "meta") if (root / "meta").is_file() else {}
    idx = _read_csv(root / "scans" / "index.csv", INDEX_HEADER)
    order = np.argsort(idx[:, 1], kind="stable")
    return Dataset(root, meta, read_imu(root / "imu.csv"), idx[order, 0].astype(int), idx[order, 1])


def write_dataset(root, imu: Sequence[ImuSample], scans: Sequence[TimedPointCloud], meta: dict[str, object], ground_truth=None) -> Path:
    root = Path(root)
    (root / "scans").mkdir(parents=True, exist_ok=True)
    write_imu(root / "imu.csv", imu)
    for i, cloud in enumerate(scans):
        write_scan(root / "scans" / f"{i:06d}.csv", cloud)
    rows = np.column_stack([np.arange(len(scans)), [c.stamp for c in scans]]).reshape(-1, 2)
    _write_csv(root / "scans" / "index.csv", INDEX_HEADER, rows, "%d,%.9f")
    if ground_truth is not None:
        write_ground_truth(root / "ground_truth.csv", *ground_truth)
    write_key_values(root / "meta", meta)
    return root


# ---------------------------------------------------------------------------
# trajectories and records


def write_tum(path, stamps, positions, quats_wxyz) -> None:
    q = np.asarray(quats_wxyz, dtype=float).reshape(-1, 4)
    rows = np.column_stack([stamps, positions, q[:, 1:], q[:, :1]]).reshape(-1, 8)
    np.savetxt(path, rows, fmt="%.9f " + " ".join(["%.9f"] * 7))


def read_tum(path):
    """``(stamps, positions, quats_wxyz)``; ``#`` lines are skipped."""
    data = np.loadtxt(path, comments="#", ndmin=2).reshape(-1, 8)
    return data[:, 0], data[:, 1:4], np.column_stack([data[:, 7], data[:, 4:7]])


def read_trajectory(path):
    """TUM file or ground-truth CSV, chosen by content."""
    with open(path) as f:
        first = f.readline()
    if first.strip().split(",") == GT_HEADER:
        return read_ground_truth(path)
    return read_tum(path)


def write_records(path, records: Sequence[OdometryRecord]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(RECORD_HEADER)
        for r in records:
            nums = [r.stamp, *r.pose.position, *r.pose.orientation.to_array(), *r.velocity, *r.accel_bias, *r.gyro_bias]
            w.writerow([f"{x:.9f}" for x in nums] + [f"{r.timing_ms:.3f}", r.iterations, r.n_correspondences, r.status, int(r.keyframe)])


def read_records(path) -> list[dict[str, object]]:
    out = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            rec: dict[str, object] = {k: float(row[k]) for k in RECORD_HEADER[:18]}
            rec.update(iterations=int(row["iterations"]), n_correspondences=int(row["n_correspondences"]), status=row["status"], keyframe=row["keyframe"] == "1")
            out.append(rec)
    return out
