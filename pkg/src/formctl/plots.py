"""Vector-graphics summaries of simulation logs (SVG via matplotlib)."""
from __future__ import annotations

import numpy as np

from .dynamics import LeaderProfile, leader_at
from .simcore import SimLog


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_error_curves(log: SimLog, path) -> None:
    """Per-agent ||e1|| + ||e1dot|| against time, one curve per follower."""
    plt = _pyplot()
    series = np.linalg.norm(log.e1, axis=2) + np.linalg.norm(log.e1dot, axis=2)
    fig, ax = plt.subplots(figsize=(6, 4))
    for i in range(series.shape[1]):
        ax.plot(log.t, series[:, i], label=f"agent {i + 1}")
    ax.set_xlabel("t [s]")
    ax.set_ylabel(r"$\|e_1\| + \|\dot{e}_1\|$")
    ax.set_title(f"Formation error signals ({log.mode})")
    ax.legend(loc="upper right")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_plan_view(log: SimLog, leader: LeaderProfile, path) -> None:
    """x-y plane: leader reference curve plus follower paths and endpoints."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5.5, 5.5))
    lead = np.array([leader_at(leader, t)[0] for t in log.t])
    ax.plot(lead[:, 0], lead[:, 1], "b-", linewidth=2, label="leader")
    N = log.x1.shape[1]
    for i in range(N):
        ax.plot(log.x1[:, i, 0], log.x1[:, i, 1], alpha=0.6, linewidth=0.9)
        ax.plot(log.x1[0, i, 0], log.x1[0, i, 1], "o", color="gray", markersize=4)
        ax.plot(log.x1[-1, i, 0], log.x1[-1, i, 1], "k^", markersize=7)
    ax.plot([], [], "o", color="gray", markersize=4, label="start")
    ax.plot([], [], "k^", markersize=7, label="final")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_title(f"Plan view ({log.mode})")
    ax.axis("equal")
    ax.legend(loc="best")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
