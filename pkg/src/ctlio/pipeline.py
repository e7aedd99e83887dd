"""End-to-end odometry: IMU callback, LiDAR callback and the offline/live drivers.

Each scan runs filter → integrate → deskew → submap → align → refine →
observer update → keyframe check. The observer state at every IMU stamp is
kept in a short history. A registered pose corrects the state at the latest
IMU stamp inside the sweep, and later samples are re-propagated from there.
Because of that the result does not depend on how far the IMU stream has
run ahead of the scan, so offline and threaded runs agree.
"""

from __future__ import annotations

import logging
import threading
import time
from collections import deque
from dataclasses import dataclass, field, fields
from typing import Iterable, Sequence

import numpy as np

from .core import GRAVITY_NORM, ImuSample, Pose, Quaternion, RobotState, TimedPointCloud
from .deskew import DeskewMode, deskew_mode
from .gicp import DegenerateRegistration, GicpParams, align, build_tree, estimate_covariances, refine_pose
from .mapping import Keyframe, KeyframeMap, KeyframeThresholds, extract_submap, insert_keyframe, is_keyframe, nearest_keyframes
from .observer import ObserverGains, Observer, propagate, update
from .preprocess import Extrinsics, FilterSpec, StampError, compensate_lever_arm, filter_cloud, lidar_to_robot
from .propagation import STAMP_TOL, integrate_imu, query_pose

log = logging.getLogger(__name__)


class CalibrationError(RuntimeError):
    """The calibration window does not look static."""


@dataclass
class PipelineConfig:
    lidar_to_robot: Pose = field(default_factory=Pose.identity)
    imu_to_robot: Pose = field(default_factory=Pose.identity)
    box_half_extent: float = 0.5
    voxel_leaf: float = 0.25
    k_neighbors: int = 10
    epsilon: float = 1e-3
    max_corr_dist: float = 0.5
    max_iterations: int = 32
    trans_eps: float = 1e-4
    rot_eps: float = 1e-4
    min_correspondences: int = 20
    keyframe_dist: float = 1.0
    keyframe_angle: float = float(np.deg2rad(30.0))
    n_nearest: int = 10
    gamma1: float = 4.0
    gamma2: float = 10.0
    gamma3: float = 5.0
    gamma4: float = 12.0
    gamma5: float = 10.0
    deskew: str = "continuous"
    calibration_duration: float = 1.0
    static_accel_var_max: float = 0.05
    workers: int = 1

    def __post_init__(self):
        DeskewMode(self.deskew)
        FilterSpec(self.box_half_extent, self.voxel_leaf)
        self.gains
        if self.k_neighbors < 4 or self.n_nearest < 1 or self.max_iterations < 1:
            raise ValueError("k_neighbors >= 4, n_nearest >= 1 and max_iterations >= 1 are required")
        if self.max_corr_dist <= 0 or self.epsilon <= 0 or self.calibration_duration <= 0:
            raise ValueError("max_corr_dist, epsilon and calibration_duration must be positive")

    @property
    def extrinsics(self) -> Extrinsics:
        return Extrinsics(self.lidar_to_robot, self.imu_to_robot)

    @property
    def filter_spec(self) -> FilterSpec:
        return FilterSpec(self.box_half_extent, self.voxel_leaf)

    @property
    def gicp(self) -> GicpParams:
        return GicpParams(
            self.k_neighbors,
            self.epsilon,
            self.max_corr_dist,
            self.max_iterations,
            self.trans_eps,
            self.rot_eps,
            self.min_correspondences,
        )

    @property
    def thresholds(self) -> KeyframeThresholds:
        return KeyframeThresholds(self.keyframe_dist, self.keyframe_angle)

    @property
    def gains(self) -> ObserverGains:
        return ObserverGains(self.gamma1, self.gamma2, self.gamma3, self.gamma4, self.gamma5)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass(frozen=True)
class OdometryRecord:
    stamp: float
    pose: Pose
    velocity: np.ndarray
    accel_bias: np.ndarray
    gyro_bias: np.ndarray
    timing_ms: float
    iterations: int = 0
    n_correspondences: int = 0
    status: str = "ok"
    keyframe: bool = False


def calibrate_static(samples: Sequence[ImuSample], duration: float | None = None, accel_var_max: float = 0.05):
    """Biases and initial attitude from a stationary window.

    The mean gyro reading is the gyro bias. The mean accelerometer direction
    is aligned with "up" to give roll and pitch (yaw is set to zero), and the
    excess of its magnitude over standard gravity, along that direction, is
    the accelerometer bias.

    Returns ``(gyro_bias, accel_bias, orientation)``.
    """
    if not samples:
        raise CalibrationError("no samples in the calibration window")
    t0 = samples[0].stamp
    window = [s for s in samples if duration is None or s.stamp < t0 + duration - STAMP_TOL]
    acc = np.array([s.accel for s in window])
    gyr = np.array([s.gyro for s in window])
    if len(window) > 1 and np.max(np.var(acc, axis=0)) > accel_var_max:
        raise CalibrationError("accelerometer variance too high for a static window")
    gyro_bias = gyr.mean(axis=0)
    m = acc.mean(axis=0)
    norm = np.linalg.norm(m)
    roll = np.arctan2(m[1], m[2])
    pitch = np.arctan2(-m[0], np.hypot(m[1], m[2]))
    accel_bias = (norm - GRAVITY_NORM) * m / norm
    return gyro_bias, accel_bias, Quaternion.from_euler(roll, pitch, 0.0)


@dataclass
class _Entry:
    state: RobotState
    sample: ImuSample  # robot-frame sample at state.stamp


@dataclass
class PipelineStats:
    stale_imu: int = 0
    skipped_scans: int = 0
    rejected_scans: int = 0
    degenerate: int = 0
    clamped_points: int = 0


class Pipeline:
    HISTORY_SECONDS = 2.0

    def __init__(self, config: PipelineConfig = PipelineConfig()):
        self.config = config
        self.ext = config.extrinsics
        self.mode = DeskewMode(config.deskew)
        self.gicp_params = config.gicp
        self.kmap = KeyframeMap()
        self.stats = PipelineStats()
        self.observer: Observer | None = None
        self.history: deque[_Entry] = deque()
        self._calib: list[ImuSample] = []
        self._last_raw: ImuSample | None = None
        self._last_update: float | None = None
        self._submap = None  # (keyframe ids, cloud, covariances, tree)
        self._lock = threading.RLock()

    @property
    def calibrated(self) -> bool:
        return self.observer is not None

    @property
    def state(self) -> RobotState | None:
        return None if self.observer is None else self.observer.snapshot()

    @property
    def latest_imu_stamp(self) -> float:
        with self._lock:
            return self.history[-1].state.stamp if self.history else -np.inf

    # -- IMU callback -------------------------------------------------------

    def process_imu(self, raw: ImuSample) -> RobotState | None:
        with self._lock:
            prev = self._last_raw
            try:
                sample = compensate_lever_arm(raw, self.ext, prev)
            except StampError:
                self.stats.stale_imu += 1
                return None
            self._last_raw = raw
            if not self.calibrated:
                self._calib.append(sample)
                if sample.stamp - self._calib[0].stamp < self.config.calibration_duration - STAMP_TOL:
                    return None
                bg, ba, q0 = calibrate_static(self._calib, self.config.calibration_duration, self.config.static_accel_var_max)
                state = RobotState(np.zeros(3), q0, np.zeros(3), ba, bg, sample.stamp)
                self.observer = Observer(state, self.config.gains)
                self.history.append(_Entry(state, sample))
                self._calib = []
                log.info("calibrated at t=%.3f: gyro bias %s, accel bias %s", sample.stamp, bg, ba)
                return state
            last = self.history[-1]
            state = propagate(last.state, last.sample, sample.stamp - last.state.stamp, sample)
            self.history.append(_Entry(state, sample))
            self._prune()
            self.observer.set(state)
            return state

    def _prune(self):
        # nothing is dropped before the map exists, so a late first scan still finds its start
        if self._last_update is None:
            return
        horizon = self._last_update - self.HISTORY_SECONDS
        while len(self.history) > 2 and self.history[1].state.stamp < horizon:
            self.history.popleft()

    def _index_at_or_before(self, t: float) -> int | None:
        idx = None
        for i, e in enumerate(self.history):
            if e.state.stamp <= t + STAMP_TOL:
                idx = i
            else:
                break
        return idx

    # -- LiDAR callback -----------------------------------------------------

    def _skip(self, cloud: TimedPointCloud, status: str, tic: float) -> OdometryRecord:
        st = self.state
        pose = st.pose if st is not None else Pose.identity()
        zero = np.zeros(3)
        return OdometryRecord(
            cloud.stamp,
            pose,
            st.velocity if st else zero,
            st.accel_bias if st else zero,
            st.gyro_bias if st else zero,
            (time.perf_counter() - tic) * 1e3,
            status=status,
        )

    def process_scan(self, cloud: TimedPointCloud) -> OdometryRecord:
        with self._lock:
            return self._process_scan(cloud)

    def _process_scan(self, cloud: TimedPointCloud) -> OdometryRecord:
        tic = time.perf_counter()
        if not self.calibrated or len(cloud) == 0:
            self.stats.skipped_scans += 1
            return self._skip(cloud, "skipped", tic)
        t_k = cloud.stamp
        t_end = t_k + float(cloud.dt[-1])
        s = self._index_at_or_before(t_k)
        if s is None:
            self.stats.skipped_scans += 1
            return self._skip(cloud, "skipped", tic)
        if self.history[-1].state.stamp < t_end - STAMP_TOL:
            self.stats.rejected_scans += 1
            return self._skip(cloud, "rejected", tic)

        filtered, empty = filter_cloud(lidar_to_robot(cloud, self.ext), self.config.filter_spec)
        if empty:
            self.stats.skipped_scans += 1
            return self._skip(cloud, "skipped", tic)

        entries = list(self.history)
        stop = next(i for i in range(s, len(entries)) if entries[i].state.stamp >= t_end - STAMP_TOL)
        traj = integrate_imu(entries[s].state, [e.sample for e in entries[s : stop + 1]])
        desk = deskew_mode(filtered, traj, self.mode, workers=self.config.workers)
        self.stats.clamped_points += desk.n_clamped
        u = self._index_at_or_before(t_end)
        t_u = entries[u].state.stamp
        prior_u = query_pose(traj, t_u)
        src = desk.cloud
        src_cov = estimate_covariances(src, self.config.k_neighbors, self.config.epsilon) if len(src) >= self.config.k_neighbors else None

        if len(self.kmap) == 0 or src_cov is None:
            if src_cov is None:
                self.stats.skipped_scans += 1
                return self._skip(cloud, "skipped", tic)
            self.kmap = insert_keyframe(self.kmap, Keyframe(prior_u, src, src_cov))
            self._last_update = t_u
            st = entries[u].state
            return OdometryRecord(
                t_k,
                query_pose(traj, t_k),
                st.velocity,
                st.accel_bias,
                st.gyro_bias,
                (time.perf_counter() - tic) * 1e3,
                status="bootstrap",
                keyframe=True,
            )

        submap, submap_cov, tree = self._submap_for(traj.last_pose())
        status = "ok"
        iterations = n_corr = 0
        try:
            res = align(src, src_cov, submap, submap_cov, self.gicp_params, tree=tree)
            delta = res.delta
            iterations, n_corr = res.iterations, res.n_correspondences
        except DegenerateRegistration as exc:
            log.warning("scan %.3f: %s; using prior", t_k, exc)
            self.stats.degenerate += 1
            delta = Pose.identity()
            status = "degenerate"

        measured = refine_pose(prior_u, delta)
        if status == "ok":
            dt_k = t_u - self._last_update if self._last_update is not None else 0.0
            if dt_k > 0:
                self._correct(u, measured, dt_k)
                self._last_update = t_u
        st = self._state_at(t_u)

        kf = False
        if status == "ok" and is_keyframe(measured, self.kmap, self.config.thresholds):
            R = delta.orientation.to_matrix()
            kf_cloud = src.with_xyz(delta.transform_points(src.xyz))
            self.kmap = insert_keyframe(self.kmap, Keyframe(measured, kf_cloud, src_cov.rotated(R)))
            kf = True
        return OdometryRecord(
            t_k,
            refine_pose(query_pose(traj, t_k), delta),
            st.velocity,
            st.accel_bias,
            st.gyro_bias,
            (time.perf_counter() - tic) * 1e3,
            iterations,
            n_corr,
            status,
            kf,
        )

    def _submap_for(self, pose: Pose):
        ids = frozenset(k.id for k in nearest_keyframes(self.kmap, pose, self.config.n_nearest))
        if self._submap is None or self._submap[0] != ids:
            cloud, cov = extract_submap(self.kmap, pose, self.config.n_nearest)
            self._submap = (ids, cloud, cov, build_tree(cloud.xyz))
        return self._submap[1:]

    def _state_at(self, t: float) -> RobotState:
        return self.history[self._index_at_or_before(t)].state

    def _correct(self, u: int, measured: Pose, dt_k: float) -> None:
        """Apply the observer correction at history index ``u`` and re-propagate."""
        hist = self.history
        hist[u] = _Entry(update(hist[u].state, measured, dt_k, self.config.gains), hist[u].sample)
        for j in range(u + 1, len(hist)):
            prev = hist[j - 1]
            hist[j] = _Entry(propagate(prev.state, prev.sample, hist[j].state.stamp - prev.state.stamp, hist[j].sample), hist[j].sample)
        self.observer.set(hist[-1].state)


# ---------------------------------------------------------------------------
# drivers


@dataclass
class RunResult:
    records: list[OdometryRecord]
    pipeline: Pipeline
    wall_s: float

    def trajectory(self, statuses=("ok", "bootstrap", "degenerate")):
        keep = [r for r in self.records if r.status in statuses]
        stamps = np.array([r.stamp for r in keep])
        pos = np.array([r.pose.position for r in keep]).reshape(-1, 3)
        quat = np.array([r.pose.orientation.to_array() for r in keep]).reshape(-1, 4)
        return stamps, pos, quat


def run_offline(imu: Sequence[ImuSample], scans: Iterable[TimedPointCloud], config: PipelineConfig = PipelineConfig()) -> RunResult:
    """Deterministic event-ordered replay.

    A scan is handed over once the first IMU sample at or after its last
    point has been processed.
    """
    tic = time.perf_counter()
    pipe = Pipeline(config)
    records = []
    i = 0
    n = len(imu)
    for cloud in scans:
        t_end = cloud.stamp + (float(cloud.dt[-1]) if len(cloud) else 0.0)
        while i < n and imu[i].stamp < t_end - STAMP_TOL:
            pipe.process_imu(imu[i])
            i += 1
        if i < n:
            pipe.process_imu(imu[i])
            i += 1
        records.append(pipe.process_scan(cloud))
    while i < n:
        pipe.process_imu(imu[i])
        i += 1
    return RunResult(records, pipe, time.perf_counter() - tic)


def run_live(imu: Sequence[ImuSample], scans: Sequence[TimedPointCloud], config: PipelineConfig = PipelineConfig(), timeout: float = 600.0) -> RunResult:
    """Run the IMU and LiDAR callbacks on two threads.

    The scan thread waits until IMU data covers the sweep; all state access
    is serialised by the pipeline lock.
    """
    tic = time.perf_counter()
    pipe = Pipeline(config)
    records: list[OdometryRecord] = []
    cond = threading.Condition()
    done = threading.Event()

    def imu_thread():
        for s in imu:
            pipe.process_imu(s)
            with cond:
                cond.notify_all()
        done.set()
        with cond:
            cond.notify_all()

    def scan_thread():
        for cloud in scans:
            t_end = cloud.stamp + (float(cloud.dt[-1]) if len(cloud) else 0.0)
            with cond:
                cond.wait_for(lambda: done.is_set() or pipe.latest_imu_stamp >= t_end - STAMP_TOL, timeout=timeout)
            records.append(pipe.process_scan(cloud))

    threads = [threading.Thread(target=imu_thread), threading.Thread(target=scan_thread)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    return RunResult(records, pipe, time.perf_counter() - tic)
