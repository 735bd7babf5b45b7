"""Static SVG figures for a logged trajectory (errors, ages, voi + events).

Figures are drawn straight onto matplotlib Figure objects, so no interactive
backend or display is involved.
"""

from __future__ import annotations

import numpy as np
from matplotlib.figure import Figure

from .simulate import TrajectoryRecord

__all__ = ["plot_error_norms", "plot_ages", "plot_voi_events", "write_trajectory_figures"]


def _new_axes(title: str, ylabel: str):
    fig = Figure(figsize=(7.5, 3.0), dpi=110)
    ax = fig.add_subplot(111)
    ax.set_title(title, fontsize=10)
    ax.set_xlabel("time step k")
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    return fig, ax


def plot_error_norms(rec: TrajectoryRecord, path) -> None:
    fig, ax = _new_axes("Estimation error norms", "norm")
    ax.plot(rec.k, rec.e_norm, lw=1.0, label="controller  ||x - x_hat||")
    ax.plot(rec.k, rec.trigger_error_norm, lw=1.0, label="event trigger  ||x - x_check||")
    ax.legend(fontsize=8)
    fig.savefig(path, format="svg", bbox_inches="tight")


def plot_ages(rec: TrajectoryRecord, path) -> None:
    fig, ax = _new_axes("Age of information", "age")
    eta = np.where(np.isinf(rec.eta), np.nan, rec.eta)
    ax.step(rec.k, rec.zeta, where="post", lw=1.0, label="event trigger (zeta)")
    ax.step(rec.k, eta, where="post", lw=1.0, label="controller (eta)")
    ax.legend(fontsize=8)
    fig.savefig(path, format="svg", bbox_inches="tight")


def plot_voi_events(rec: TrajectoryRecord, path) -> None:
    n_scale = max(rec.k.size - 1, 1)
    fig, ax = _new_axes(f"Value of information (policy: {rec.policy})", "voi / N")
    ax.plot(rec.k, rec.voi / n_scale, lw=1.0, label="voi (scaled by 1/N)")
    ax.axhline(0.0, color="k", lw=0.6)
    events = rec.k[rec.delta.astype(bool)]
    ax.plot(events, np.zeros_like(events, dtype=float), "^", ms=5,
            color="tab:red", label="transmission")
    ax.legend(fontsize=8)
    fig.savefig(path, format="svg", bbox_inches="tight")


def write_trajectory_figures(rec: TrajectoryRecord, outdir, prefix: str = "fig") -> list:
    """Write the three standard figures; returns the written paths."""
    from pathlib import Path

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = [
        outdir / f"{prefix}_errors.svg",
        outdir / f"{prefix}_ages.svg",
        outdir / f"{prefix}_voi_events.svg",
    ]
    plot_error_norms(rec, paths[0])
    plot_ages(rec, paths[1])
    plot_voi_events(rec, paths[2])
    return paths
