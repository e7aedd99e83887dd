"""Synthetic ground truth: analytic trajectories, IMU synthesis, spinning-LiDAR sweeps.

Trajectories are sums of closed-form terms with exact first and second
derivatives, so IMU readings follow from the rigid-body model without any
numerical differentiation. Attitude is Z-Y-X Euler (yaw, pitch, roll).

An optional quintic ramp ``ramp`` seconds long fades motion in at the start
of the motion window and (unless ``ramp_out`` is off) out at its end,
keeping the trajectory C² across the static preamble/postamble.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import GRAVITY, ImuSample, Pose, Quaternion, TimedPointCloud, normalize_quats, quat_mul_arr, rotate_points

KINDS = ("static", "constant_velocity", "constant_accel", "sinusoid", "aggressive_spin")


def _vec3(x) -> np.ndarray:
    return np.asarray(x, dtype=float).reshape(3)


@dataclass(frozen=True)
class TrajectorySpec:
    kind: str = "static"
    duration: float = 1.0
    preamble: float = 0.0
    postamble: float = 0.0
    ramp: float = 0.0
    ramp_out: bool = True
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    accel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    pos_amp: np.ndarray = field(default_factory=lambda: np.zeros(3))
    pos_freq: np.ndarray = field(default_factory=lambda: np.zeros(3))
    pos_phase: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rot_amp: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rot_freq: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rot_phase: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rot_rate: np.ndarray = field(default_factory=lambda: np.zeros(3))
    base_roll: float = 0.0
    base_pitch: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        for name in ("velocity", "accel", "pos_amp", "pos_freq", "pos_phase", "rot_amp", "rot_freq", "rot_phase", "rot_rate"):
            object.__setattr__(self, name, _vec3(getattr(self, name)))
        if self.duration <= 0 or self.preamble < 0 or self.postamble < 0 or self.ramp < 0:
            raise ValueError("durations must be non-negative (motion duration positive)")
        if self.ramp > 0 and (2 if self.ramp_out else 1) * self.ramp > self.duration:
            raise ValueError("ramps longer than the motion window")
        if not self.ramp_out and self.postamble > 0:
            raise ValueError("a postamble needs ramp_out so motion can stop")
        if self.kind == "constant_accel" and np.any(self.accel) and (self.postamble > 0 or self.ramp > 0):
            raise ValueError("constant_accel does not support ramps or a postamble")

    @property
    def total(self) -> float:
        return self.preamble + self.duration + self.postamble

    @classmethod
    def static(cls, duration: float = 1.0, roll: float = 0.0, pitch: float = 0.0) -> "TrajectorySpec":
        return cls("static", duration, base_roll=roll, base_pitch=pitch)

    @classmethod
    def aggressive_spin(cls, duration: float = 19.0, preamble: float = 1.0, spin_rate: float = 3.5, ramp: float = 3.0) -> "TrajectorySpec":
        """Yaw spin up to ``spin_rate`` rad/s with a figure-eight and a roll/pitch wobble.

        Motion ramps in but not out: the run ends while still spinning.
        """
        return cls(
            "aggressive_spin",
            duration,
            preamble=preamble,
            ramp=ramp,
            ramp_out=False,
            pos_amp=(1.5, 1.0, 0.2),
            pos_freq=(0.1, 0.2, 0.15),
            rot_amp=(0.08, 0.08, 0.0),
            rot_freq=(0.3, 0.25, 0.0),
            rot_phase=(0.0, 0.5 * np.pi, 0.0),
            rot_rate=(0.0, 0.0, spin_rate),
        )

    @classmethod
    def sinusoid_loop(cls, duration: float = 28.0, preamble: float = 1.0, postamble: float = 1.0, ramp: float = 2.0) -> "TrajectorySpec":
        return cls(
            "sinusoid",
            duration,
            preamble=preamble,
            postamble=postamble,
            ramp=ramp,
            pos_amp=(3.0, 2.0, 0.3),
            pos_freq=(1 / 14, 1 / 7, 1 / 7),
            rot_amp=(0.1, 0.1, 0.8),
            rot_freq=(0.2, 0.15, 1 / 14),
        )


@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", _vec3(self.lo))
        object.__setattr__(self, "hi", _vec3(self.hi))
        if np.any(self.hi <= self.lo):
            raise ValueError("degenerate box extents")


@dataclass(frozen=True)
class Plane:
    """Axis-aligned rectangle ``x[axis] == offset`` bounded in the other axes."""

    axis: int
    offset: float
    lo: tuple[float, float]
    hi: tuple[float, float]

    def __post_init__(self):
        if self.axis not in (0, 1, 2) or self.hi[0] <= self.lo[0] or self.hi[1] <= self.lo[1]:
            raise ValueError("degenerate plane")


@dataclass(frozen=True)
class SceneSpec:
    boxes: tuple[Box, ...] = ()
    planes: tuple[Plane, ...] = ()

    @classmethod
    def box_room(cls, size: float = 20.0, height: float = 8.0, pillars: bool = True) -> "SceneSpec":
        h = size / 2
        boxes = [Box((-h, -h, -2.0), (h, h, height - 2.0))]
        if pillars:
            boxes += [
                Box((4.0, 3.0, -2.0), (5.0, 4.5, height - 2.0)),
                Box((-6.5, 5.0, -2.0), (-5.0, 5.8, 1.0)),
                Box((-4.0, -6.0, -2.0), (-2.5, -4.0, height - 2.0)),
                Box((6.0, -7.0, -2.0), (7.5, -6.2, 0.5)),
            ]
        return cls(tuple(boxes))

    @classmethod
    def single_wall(cls, x: float = 6.0, half_width: float = 30.0) -> "SceneSpec":
        return cls(planes=(Plane(0, x, (-half_width, -half_width), (half_width, half_width)),))


@dataclass(frozen=True)
class SimNoiseSpec:
    accel_noise_std: float = 0.0
    gyro_noise_std: float = 0.0
    accel_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gyro_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    seed: int = 0

    def __post_init__(self):
        if self.accel_noise_std < 0 or self.gyro_noise_std < 0:
            raise ValueError("noise std must be non-negative")
        object.__setattr__(self, "accel_bias", _vec3(self.accel_bias))
        object.__setattr__(self, "gyro_bias", _vec3(self.gyro_bias))


@dataclass(frozen=True)
class LidarSpec:
    channels: int = 32
    horiz_res: int = 512
    rate: float = 10.0
    max_range: float = 100.0
    vfov_deg: tuple[float, float] = (-22.5, 22.5)

    @property
    def period(self) -> float:
        return 1.0 / self.rate


# ---------------------------------------------------------------------------
# analytic trajectory


def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return (
        10 * u**3 - 15 * u**4 + 6 * u**5,
        30 * u**2 - 60 * u**3 + 30 * u**4,
        60 * u - 180 * u**2 + 120 * u**3,
    )


def _smoothstep_integral(u):
    u = np.clip(u, 0.0, 1.0)
    return 2.5 * u**4 - 3 * u**5 + u**6


def _envelope(spec: TrajectorySpec, tau):
    """Envelope ``e`` with derivatives, and its integral ``E``, on the motion clock."""
    D, r = spec.duration, spec.ramp
    if r == 0:
        one = np.ones_like(tau)
        return one, np.zeros_like(tau), np.zeros_like(tau), tau.copy()
    e = np.ones_like(tau)
    e1 = np.zeros_like(tau)
    e2 = np.zeros_like(tau)
    E = r / 2 + (tau - r)
    rin = tau < r
    s, s1, s2 = _smoothstep(tau[rin] / r)
    e[rin], e1[rin], e2[rin] = s, s1 / r, s2 / r**2
    E[rin] = r * _smoothstep_integral(tau[rin] / r)
    if not spec.ramp_out:
        return e, e1, e2, E
    rout = tau > D - r
    u = (D - tau[rout]) / r
    s, s1, s2 = _smoothstep(u)
    e[rout], e1[rout], e2[rout] = s, -s1 / r, s2 / r**2
    E[rout] = r / 2 + (D - 2 * r) + r * (0.5 - _smoothstep_integral(u))
    return e, e1, e2, E


def _sinusoid_terms(amp, freq, phase, tau, env):
    """e(τ)·A(sin(ωτ+φ) - sin φ) per axis with first/second derivatives."""
    e, e1, e2, _ = env
    w = 2 * np.pi * freq
    arg = tau[:, None] * w + phase
    g = amp * (np.sin(arg) - np.sin(phase))
    g1 = amp * w * np.cos(arg)
    g2 = -amp * w * w * np.sin(arg)
    e, e1, e2 = e[:, None], e1[:, None], e2[:, None]
    return e * g, e1 * g + e * g1, e2 * g + 2 * e1 * g1 + e * g2


@dataclass
class GroundTruth:
    """Vectorised ground-truth samples of the robot frame in the world."""

    t: np.ndarray
    position: np.ndarray
    velocity: np.ndarray
    accel: np.ndarray
    orientation: np.ndarray  # (N,4) w,x,y,z
    omega_body: np.ndarray
    alpha_body: np.ndarray

    def pose(self, i: int) -> Pose:
        return Pose(self.position[i], Quaternion.from_array(self.orientation[i]))


def _euler_to_quat(roll, pitch, yaw) -> np.ndarray:
    cr, sr = np.cos(roll / 2), np.sin(roll / 2)
    cp, sp = np.cos(pitch / 2), np.sin(pitch / 2)
    cy, sy = np.cos(yaw / 2), np.sin(yaw / 2)
    qz = np.stack([cy, 0 * cy, 0 * cy, sy], -1)
    qy = np.stack([cp, 0 * cp, sp, 0 * cp], -1)
    qx = np.stack([cr, sr, 0 * cr, 0 * cr], -1)
    return normalize_quats(quat_mul_arr(quat_mul_arr(qz, qy), qx))


def ground_truth(spec: TrajectorySpec, times) -> GroundTruth:
    t = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(t < -1e-12) or np.any(t > spec.total + 1e-9):
        raise ValueError(f"time outside [0, {spec.total}]")
    tau = np.clip(t - spec.preamble, 0.0, spec.duration)
    moving = ((t - spec.preamble) >= 0) & ((t - spec.preamble) <= spec.duration)
    env = _envelope(spec, tau)
    n = len(t)
    pos = np.zeros((n, 3))
    vel = np.zeros((n, 3))
    acc = np.zeros((n, 3))
    ang = np.zeros((n, 3))
    ang1 = np.zeros((n, 3))
    ang2 = np.zeros((n, 3))
    ang[:, 0] = spec.base_roll
    ang[:, 1] = spec.base_pitch
    if spec.kind != "static":
        e, e1, _, E = env
        pos += np.outer(E, spec.velocity)
        vel += np.outer(e, spec.velocity)
        acc += np.outer(env[1], spec.velocity)
        pos += 0.5 * np.outer(tau**2, spec.accel)
        vel += np.outer(tau, spec.accel)
        acc += spec.accel
        x, x1, x2 = _sinusoid_terms(spec.pos_amp, spec.pos_freq, spec.pos_phase, tau, env)
        pos += x
        vel += x1
        acc += x2
        a, a1, a2 = _sinusoid_terms(spec.rot_amp, spec.rot_freq, spec.rot_phase, tau, env)
        ang += a + np.outer(E, spec.rot_rate)
        ang1 += a1 + np.outer(e, spec.rot_rate)
        ang2 += a2 + np.outer(e1, spec.rot_rate)
        # derivatives vanish outside the motion window
        vel[~moving] = 0.0
        acc[~moving] = 0.0
        ang1[~moving] = 0.0
        ang2[~moving] = 0.0
    phi, th, psi = ang[:, 0], ang[:, 1], ang[:, 2]
    dphi, dth, dpsi = ang1[:, 0], ang1[:, 1], ang1[:, 2]
    ddphi, ddth, ddpsi = ang2[:, 0], ang2[:, 1], ang2[:, 2]
    sphi, cphi, sth, cth = np.sin(phi), np.cos(phi), np.sin(th), np.cos(th)
    omega = np.stack(
        [
            dphi - dpsi * sth,
            dth * cphi + dpsi * cth * sphi,
            -dth * sphi + dpsi * cth * cphi,
        ],
        -1,
    )
    alpha = np.stack(
        [
            ddphi - ddpsi * sth - dpsi * cth * dth,
            ddth * cphi - dth * sphi * dphi + ddpsi * cth * sphi - dpsi * sth * dth * sphi + dpsi * cth * cphi * dphi,
            -ddth * sphi - dth * cphi * dphi + ddpsi * cth * cphi - dpsi * sth * dth * cphi - dpsi * cth * sphi * dphi,
        ],
        -1,
    )
    return GroundTruth(t, pos, vel, acc, _euler_to_quat(phi, th, psi), omega, alpha)


def ground_truth_pose(spec: TrajectorySpec, t: float) -> Pose:
    return ground_truth(spec, [t]).pose(0)


# ---------------------------------------------------------------------------
# IMU


def imu_times(spec: TrajectorySpec, rate: float) -> np.ndarray:
    if rate <= 0:
        raise ValueError("rate must be positive")
    n = int(np.floor(spec.total * rate + 1e-9)) + 1
    return np.arange(n) / rate


def sample_imu(
    spec: TrajectorySpec,
    rate: float,
    noise: SimNoiseSpec = SimNoiseSpec(),
    imu_to_robot: Pose | None = None,
    times: np.ndarray | None = None,
) -> list[ImuSample]:
    """Synthesise IMU readings ``Rᵀ(a - g) + b + n`` and ``ω + b + n``.

    With an IMU offset the rigid-body tangential and centripetal terms are
    included and readings are expressed in the IMU's own axes.
    """
    t = imu_times(spec, rate) if times is None else np.asarray(times, dtype=float)
    gt = ground_truth(spec, t)
    qc = gt.orientation * np.array([1.0, -1.0, -1.0, -1.0])
    f = rotate_points(qc, gt.accel - GRAVITY)
    w = gt.omega_body
    if imu_to_robot is not None:
        r = imu_to_robot.position
        f = f + np.cross(gt.alpha_body, r) + np.cross(w, np.cross(w, r))
        qb = imu_to_robot.orientation.conjugate().to_array()[None, :]
        f = rotate_points(qb, f)
        w = rotate_points(qb, w)
    rng = np.random.default_rng(noise.seed)
    f = f + noise.accel_bias + noise.accel_noise_std * rng.standard_normal(f.shape)
    w = w + noise.gyro_bias + noise.gyro_noise_std * rng.standard_normal(w.shape)
    return [ImuSample(float(ti), fi, wi) for ti, fi, wi in zip(t, f, w)]


# ---------------------------------------------------------------------------
# LiDAR


def raycast(scene: SceneSpec, origins: np.ndarray, dirs: np.ndarray, max_range: float) -> np.ndarray:
    """Distance to the first surface along each ray (``inf`` for no hit)."""
    best = np.full(len(origins), np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        for b in scene.boxes:
            t1 = (b.lo - origins) / dirs
            t2 = (b.hi - origins) / dirs
            tmin = np.nanmax(np.minimum(t1, t2), axis=1)
            tmax = np.nanmin(np.maximum(t1, t2), axis=1)
            hit = np.where(tmin > 1e-9, tmin, tmax)
            ok = (tmax >= np.maximum(tmin, 0.0)) & (hit > 1e-9)
            best = np.where(ok & (hit < best), hit, best)
        for p in scene.planes:
            a = p.axis
            o1, o2 = [i for i in range(3) if i != a]
            tt = (p.offset - origins[:, a]) / dirs[:, a]
            x1 = origins[:, o1] + tt * dirs[:, o1]
            x2 = origins[:, o2] + tt * dirs[:, o2]
            ok = (tt > 1e-9) & (x1 >= p.lo[0]) & (x1 <= p.hi[0]) & (x2 >= p.lo[1]) & (x2 <= p.hi[1])
            best = np.where(ok & (tt < best), tt, best)
    best[best > max_range] = np.inf
    return best


@dataclass
class SweepRender:
    distorted: TimedPointCloud  # LiDAR frame, each point at its own time
    reference: TimedPointCloud  # world frame
    gt_position: np.ndarray  # robot pose per point
    gt_orientation: np.ndarray


def beam_directions(lidar: LidarSpec) -> tuple[np.ndarray, np.ndarray]:
    """Column times (fraction of a sweep) and unit beam vectors ``(H, C, 3)``."""
    H, C = lidar.horiz_res, lidar.channels
    az = 2 * np.pi * np.arange(H) / H
    el = np.deg2rad(np.linspace(lidar.vfov_deg[0], lidar.vfov_deg[1], C))
    d = np.stack(
        [
            np.cos(el)[None, :] * np.cos(az)[:, None],
            np.cos(el)[None, :] * np.sin(az)[:, None],
            np.broadcast_to(np.sin(el)[None, :], (H, C)),
        ],
        -1,
    )
    return np.arange(H) / H, d


def render_sweep(
    spec: TrajectorySpec,
    scene: SceneSpec,
    lidar: LidarSpec = LidarSpec(),
    t0: float = 0.0,
    lidar_to_robot: Pose | None = None,
) -> SweepRender:
    """Cast one sweep starting at ``t0``; column ``j`` fires at ``t0 + j/(H·rate)``."""
    if t0 < 0 or t0 + lidar.period > spec.total + 1e-9:
        raise ValueError("sweep outside trajectory span")
    ext = lidar_to_robot if lidar_to_robot is not None else Pose.identity()
    frac, d = beam_directions(lidar)
    H, C = lidar.horiz_res, lidar.channels
    col_dt = frac * lidar.period
    gt = ground_truth(spec, t0 + col_dt)
    q_ws = normalize_quats(quat_mul_arr(gt.orientation, ext.orientation.to_array()[None, :]))
    o_ws = gt.position + rotate_points(gt.orientation, np.broadcast_to(ext.position, (H, 3)))
    q_rep = np.repeat(q_ws, C, axis=0)
    o_rep = np.repeat(o_ws, C, axis=0)
    d_flat = d.reshape(-1, 3)
    dirs_w = rotate_points(q_rep, d_flat)
    rng = raycast(scene, o_rep, dirs_w, lidar.max_range)
    ok = np.isfinite(rng)
    ref = o_rep[ok] + rng[ok, None] * dirs_w[ok]
    dist = rng[ok, None] * d_flat[ok]
    dt = np.repeat(col_dt, C)[ok]
    return SweepRender(
        TimedPointCloud(t0, dist, dt),
        TimedPointCloud(t0, ref, dt),
        np.repeat(gt.position, C, axis=0)[ok],
        np.repeat(gt.orientation, C, axis=0)[ok],
    )


def scan_stamps(spec: TrajectorySpec, lidar: LidarSpec) -> np.ndarray:
    n = int(np.floor((spec.total - lidar.period) * lidar.rate + 1e-9)) + 1
    return np.arange(n) / lidar.rate
