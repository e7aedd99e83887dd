"""Report figures written to files (Agg backend, no display needed)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 4.0),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "font.size": 9,
}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_trajectories(path, est_pos, gt_pos=None) -> Path:
    """Top-down (x, y) overlay of estimate and ground truth."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if gt_pos is not None and len(gt_pos):
            ax.plot(gt_pos[:, 0], gt_pos[:, 1], color="0.5", lw=2.0, label="ground truth")
        ax.plot(est_pos[:, 0], est_pos[:, 1], color="C0", lw=1.0, label="estimate")
        ax.plot(est_pos[:1, 0], est_pos[:1, 1], "o", color="C2", ms=4, label="start")
        ax.plot(est_pos[-1:, 0], est_pos[-1:, 1], "s", color="C3", ms=4, label="end")
        ax.set_aspect("equal", adjustable="datalim")
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        ax.legend(loc="best")
        return _save(fig, Path(path))


def plot_errors(path, stamps, errors) -> Path:
    """Translational error against time."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(stamps, np.asarray(errors) * 1e3, color="C0", lw=1.0)
        ax.set_xlabel("time [s]")
        ax.set_ylabel("translation error [mm]")
        ax.set_ylim(bottom=0)
        return _save(fig, Path(path))


def plot_timing(path, timing_ms) -> Path:
    """Histogram of per-scan processing time with the mean and 95th percentile marked."""
    t = np.asarray(timing_ms, dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.hist(t, bins=min(40, max(5, len(t) // 5)), color="C0", alpha=0.8)
        if len(t):
            ax.axvline(np.mean(t), color="C3", ls="--", lw=1, label=f"mean {np.mean(t):.1f} ms")
            ax.axvline(np.percentile(t, 95), color="C1", ls=":", lw=1, label=f"p95 {np.percentile(t, 95):.1f} ms")
            ax.legend(loc="upper right")
        ax.set_xlabel("per-scan time [ms]")
        ax.set_ylabel("scans")
        return _save(fig, Path(path))
