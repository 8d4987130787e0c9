"""Figure rendering for simulation runs and metric reports.

Files are written next to the delimited output; the Agg backend keeps
rendering headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path: Path):
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def render_run_figures(log, out_dir) -> list:
    """Joint positions, estimates, tracking ratios and diagnostics for a run."""
    out_dir = Path(out_dir)
    t = log.t
    written = []

    fig, axes = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    for j, ax in enumerate(axes):
        ax.plot(t, log.q_m[:, j], label="master", lw=1.0)
        ax.plot(t, log.q_s[:, j], label="slave", lw=1.0, ls="--")
        ax.set_ylabel(f"joint {j + 1} [rad]")
        ax.grid(alpha=0.3)
    axes[0].legend(loc="best")
    axes[1].set_xlabel("time [s]")
    axes[0].set_title("joint positions")
    written.append(_save(fig, out_dir / "positions.png"))

    fig, axes = plt.subplots(1, 2, figsize=(11, 4), sharex=True)
    for ax, th, true, side in (
        (axes[0], log.theta_m, log.theta_true_m, "master"),
        (axes[1], log.theta_s, log.theta_true_s, "slave"),
    ):
        for i in range(5):
            (line,) = ax.plot(t, th[:, i], lw=1.0, label=f"component {i + 1}")
            ax.axhline(true[i], color=line.get_color(), ls=":", lw=0.8)
        ax.set_title(f"{side} parameter estimates (dotted: true values)")
        ax.set_xlabel("time [s]")
        ax.grid(alpha=0.3)
    axes[0].legend(fontsize=8, loc="best")
    written.append(_save(fig, out_dir / "estimates.png"))

    fig, axes = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    axes[0].plot(t, log.col("dp_1"), lw=0.8, label="joint 1")
    axes[0].plot(t, log.col("dp_2"), lw=0.8, label="joint 2")
    axes[0].set_ylabel("position ratio")
    axes[0].legend(loc="best")
    axes[1].plot(t, log.col("df_1"), lw=0.8, label="joint 1")
    axes[1].plot(t, log.col("df_2"), lw=0.8, label="joint 2")
    axes[1].set_ylabel("force ratio")
    axes[1].set_xlabel("time [s]")
    for ax in axes:
        ax.grid(alpha=0.3)
    axes[0].set_title("tracking performance ratios")
    written.append(_save(fig, out_dir / "tracking.png"))

    fig, axes = plt.subplots(3, 1, figsize=(8, 7), sharex=True)
    axes[0].plot(t, log.V, lw=1.0)
    axes[0].set_ylabel("V")
    axes[1].plot(t, log.col("mu_m"), lw=0.8, label="master")
    axes[1].plot(t, log.col("mu_s"), lw=0.8, label="slave")
    axes[1].set_ylabel("forgetting rate")
    axes[1].legend(loc="best")
    axes[2].plot(t, log.col("lmin_P_m"), lw=0.8, label="master")
    axes[2].plot(t, log.col("lmin_P_s"), lw=0.8, label="slave")
    axes[2].set_ylabel("lambda_min(P)")
    axes[2].set_xlabel("time [s]")
    for ax in axes:
        ax.grid(alpha=0.3)
    axes[0].set_title("energy functional and adaptation diagnostics")
    written.append(_save(fig, out_dir / "diagnostics.png"))

    cfg = log.config
    if cfg is not None:
        l1m, l2m = cfg.master.l1, cfg.master.l2
        l1s, l2s = cfg.slave.l1, cfg.slave.l2
        x_m = l1m * np.cos(log.q_m[:, 0]) + l2m * np.cos(log.q_m[:, 0] + log.q_m[:, 1])
        y_m = l1m * np.sin(log.q_m[:, 0]) + l2m * np.sin(log.q_m[:, 0] + log.q_m[:, 1])
        x_s = l1s * np.cos(log.q_s[:, 0]) + l2s * np.cos(log.q_s[:, 0] + log.q_s[:, 1])
        y_s = l1s * np.sin(log.q_s[:, 0]) + l2s * np.sin(log.q_s[:, 0] + log.q_s[:, 1])
        fig, axes = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
        axes[0].plot(t, x_m, label="master", lw=1.0)
        axes[0].plot(t, x_s, label="slave", lw=1.0, ls="--")
        axes[0].set_ylabel("x [m]")
        axes[0].legend(loc="best")
        axes[1].plot(t, y_m, lw=1.0)
        axes[1].plot(t, y_s, lw=1.0, ls="--")
        if cfg.wall.stiffness > 0.0:
            axes[1].axhline(cfg.wall.y, color="k", lw=1.2, label="wall")
            axes[1].legend(loc="best")
        axes[1].set_ylabel("y [m]")
        axes[1].set_xlabel("time [s]")
        for ax in axes:
            ax.grid(alpha=0.3)
        axes[0].set_title("end-effector positions")
        written.append(_save(fig, out_dir / "endeffector.png"))
    return written


def render_metrics_figures(header, data, acc, out_dir) -> list:
    """Ratio time series plus a bar chart of the accumulated indices."""
    out_dir = Path(out_dir)
    col = {name: i for i, name in enumerate(header)}
    t = data[:, col["t"]]
    written = []

    fig, ax = plt.subplots(figsize=(8, 4))
    for name in ("dp_1", "dp_2", "df_1", "df_2"):
        ax.plot(t, data[:, col[name]], lw=0.8, label=name)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("tracking ratio")
    ax.grid(alpha=0.3)
    ax.legend(loc="best")
    ax.set_title("tracking ratios")
    written.append(_save(fig, out_dir / "metrics_series.png"))

    fig, ax = plt.subplots(figsize=(6, 4))
    labels = ["pos j1", "pos j2", "force j1", "force j2"]
    values = [acc.dp_integral[0], acc.dp_integral[1], acc.df_integral[0], acc.df_integral[1]]
    ax.bar(labels, values, color=["C0", "C0", "C1", "C1"])
    ax.set_ylabel("integrated ratio [s]")
    ax.grid(alpha=0.3, axis="y")
    ax.set_title("tracking indices")
    written.append(_save(fig, out_dir / "metrics_indices.png"))
    return written
