"""Trajectory error metrics and timing statistics."""

from __future__ import annotations

import numpy as np


def associate(est_stamps, gt_stamps, max_dt: float = 0.01) -> tuple[np.ndarray, np.ndarray]:
    """Pair each estimate with the nearest ground-truth stamp within ``max_dt``.

    Returns index arrays ``(i_est, i_gt)``. On an exact tie the earlier
    ground-truth stamp wins.
    """
    est = np.asarray(est_stamps, dtype=float)
    gt = np.asarray(gt_stamps, dtype=float)
    if len(gt) == 0 or len(est) == 0:
        return np.zeros(0, int), np.zeros(0, int)
    order = np.argsort(gt, kind="stable")
    g = gt[order]
    hi = np.clip(np.searchsorted(g, est), 1, len(g) - 1) if len(g) > 1 else np.zeros(len(est), int)
    lo = np.maximum(hi - 1, 0)
    pick = np.where(np.abs(g[hi] - est) < np.abs(g[lo] - est), hi, lo)
    ok = np.abs(g[pick] - est) < max_dt
    return np.nonzero(ok)[0], order[pick[ok]]


def ate_rmse(est_stamps, est_pos, gt_stamps, gt_pos, max_dt: float = 0.01) -> float:
    """RMSE of translational residuals after nearest-stamp association.

    No alignment is applied: both trajectories are taken to live in the same
    world frame.
    """
    i, j = associate(est_stamps, gt_stamps, max_dt)
    if len(i) == 0:
        raise ValueError("no poses could be associated within max_dt")
    r = np.asarray(est_pos, dtype=float)[i] - np.asarray(gt_pos, dtype=float)[j]
    return float(np.sqrt(np.mean(np.sum(r * r, axis=1))))


def translation_errors(est_stamps, est_pos, gt_stamps, gt_pos, max_dt: float = 0.01) -> tuple[np.ndarray, np.ndarray]:
    """Associated stamps and per-pose translational error norms."""
    i, j = associate(est_stamps, gt_stamps, max_dt)
    r = np.asarray(est_pos, dtype=float)[i] - np.asarray(gt_pos, dtype=float)[j]
    return np.asarray(est_stamps, dtype=float)[i], np.linalg.norm(r, axis=1)


def end_to_end_error(positions) -> float:
    """Distance between the first and last position of a loop."""
    p = np.asarray(positions, dtype=float).reshape(-1, 3)
    if len(p) < 2:
        raise ValueError("need at least two poses")
    return float(np.linalg.norm(p[-1] - p[0]))


def timing_stats(timing_ms) -> dict[str, float]:
    t = np.asarray(timing_ms, dtype=float)
    if len(t) == 0:
        return {"timing_mean_ms": float("nan"), "timing_p95_ms": float("nan"), "timing_max_ms": float("nan")}
    return {
        "timing_mean_ms": float(np.mean(t)),
        "timing_p95_ms": float(np.percentile(t, 95)),
        "timing_max_ms": float(np.max(t)),
    }
