"""Command line: ``simulate``, ``run`` and ``evaluate``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .deskew import DeskewMode
from .mapping import export_map, write_ply
from .metrics import ate_rmse, end_to_end_error, timing_stats, translation_errors
from .pipeline import run_live, run_offline
from .simulator import ground_truth, imu_times, render_sweep, sample_imu, scan_stamps

log = logging.getLogger("ctlio")


def cmd_simulate(args) -> int:
    sc = io.read_scenario(args.spec, seed=args.seed)
    imu = sample_imu(sc.trajectory, sc.imu_rate, sc.noise, sc.imu_to_robot)
    stamps = scan_stamps(sc.trajectory, sc.lidar)
    scans = [render_sweep(sc.trajectory, sc.scene, sc.lidar, t, sc.lidar_to_robot).distorted for t in stamps]
    t_gt = imu_times(sc.trajectory, sc.imu_rate)
    gt = ground_truth(sc.trajectory, t_gt)
    meta = {
        "kind": sc.trajectory.kind,
        "duration_s": sc.trajectory.total,
        "imu_rate_hz": sc.imu_rate,
        "lidar_rate_hz": sc.lidar.rate,
        "lidar_channels": sc.lidar.channels,
        "lidar_horiz_res": sc.lidar.horiz_res,
        "seed": sc.noise.seed,
        "lidar_to_robot": sc.lidar_to_robot,
        "imu_to_robot": sc.imu_to_robot,
    }
    out = io.write_dataset(args.out, imu, scans, meta, (t_gt, gt.position, gt.orientation))
    print(f"wrote {len(imu)} IMU samples and {len(scans)} scans to {out}")
    return 0


def cmd_run(args) -> int:
    ds = io.read_dataset(args.dataset)
    values = ds.extrinsics_config()
    if args.config:
        values |= io.read_key_values(args.config)
    if args.deskew:
        values["deskew"] = args.deskew
    if args.workers is not None:
        values["workers"] = str(args.workers)
    config = io.config_from_dict(values)
    if args.live:
        res = run_live(ds.imu, list(ds.scans()), config)
    else:
        res = run_offline(ds.imu, ds.scans(), config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stamps, pos, quat = res.trajectory()
    io.write_tum(out / "trajectory.tum", stamps, pos, quat)
    io.write_records(out / "records.csv", res.records)
    io.write_config(out / "config.txt", config)
    write_ply(out / "map.ply", export_map(res.pipeline.kmap, config.voxel_leaf).xyz)
    st = res.pipeline.stats
    print(f"processed {len(res.records)} scans in {res.wall_s:.1f} s ({config.deskew} deskew)")
    print(f"keyframes {len(res.pipeline.kmap)}, skipped {st.skipped_scans}, rejected {st.rejected_scans}, degenerate {st.degenerate}, stale imu {st.stale_imu}")
    print(f"outputs in {out}")
    return 0


def cmd_evaluate(args) -> int:
    est_t, est_p, _ = io.read_trajectory(args.est)
    gt_t, gt_p, _ = io.read_trajectory(args.gt)
    ate = ate_rmse(est_t, est_p, gt_t, gt_p, args.max_dt)
    e2e = end_to_end_error(est_p)
    err_t, err = translation_errors(est_t, est_p, gt_t, gt_p, args.max_dt)
    records_path = Path(args.records) if args.records else Path(args.est).with_name("records.csv")
    timing = np.array([])
    if records_path.is_file():
        timing = np.array([r["timing_ms"] for r in io.read_records(records_path) if r["status"] != "skipped"])
    stats = timing_stats(timing)

    print(f"ATE RMSE          {ate:.6f} m over {len(err)} associated poses")
    print(f"end-to-end error  {e2e:.6f} m")
    if len(timing):
        print(f"per-scan time     mean {stats['timing_mean_ms']:.1f} ms, p95 {stats['timing_p95_ms']:.1f} ms, max {stats['timing_max_ms']:.1f} ms")
    else:
        print("per-scan time     unavailable (no records file)")
    print("---")
    kv = {"ate_rmse_m": ate, "end_to_end_m": e2e, "n_associated": len(err), **stats}
    for k, v in kv.items():
        print(f"{k}={v:.6f}" if isinstance(v, float) else f"{k}={v}")

    if args.plot_dir:
        from .plotting import plot_errors, plot_timing, plot_trajectories

        d = Path(args.plot_dir)
        d.mkdir(parents=True, exist_ok=True)
        plot_trajectories(d / "trajectory.png", est_p, gt_p)
        plot_errors(d / "error.png", err_t, err)
        if len(timing):
            plot_timing(d / "timing.png", timing)
        print(f"plots={d}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ctlio", description="LiDAR-inertial odometry with continuous-time deskewing")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="render a synthetic dataset from a scenario file")
    s.add_argument("--spec", required=True, help="scenario key-value file")
    s.add_argument("--out", required=True, help="output dataset directory")
    s.add_argument("--seed", type=int, default=None, help="noise seed (overrides the scenario)")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("run", help="run odometry over a dataset directory")
    r.add_argument("--dataset", required=True)
    r.add_argument("--config", help="key-value config file")
    r.add_argument("--deskew", choices=[m.value for m in DeskewMode])
    r.add_argument("--out", required=True)
    r.add_argument("--workers", type=int)
    r.add_argument("--live", action="store_true", help="run the IMU and scan callbacks on separate threads")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("evaluate", help="compare a trajectory against ground truth")
    e.add_argument("--est", required=True, help="estimated trajectory (TUM)")
    e.add_argument("--gt", required=True, help="ground truth (TUM or ground_truth.csv)")
    e.add_argument("--records", help="per-scan records CSV (default: records.csv next to --est)")
    e.add_argument("--max-dt", type=float, default=0.01, help="association window [s]")
    e.add_argument("--plot-dir", help="write trajectory, error and timing figures here")
    e.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (io.ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
