"""Figure rendering: agent paths (2-d / 3-d) and potential decay.

Style follows the usual formation-control figure conventions: solid
colored curves for the agent paths, the initial formation drawn with
dotted edges, the final formation with dashed edges.  Everything is
pinned (canvas size, dpi, colors, fonts) so that re-rendering a job
reproduces the output file byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import PlotError, RunData, load_run  # noqa: E402

__all__ = ["PlotJob", "KINDS", "render", "decimate_indices"]

KINDS = ("paths-2d", "paths-3d", "psi-decay")

FIGSIZE = (6.4, 4.8)
DPI = 150
_CYCLE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
          "#8c564b", "#17becf", "#7f7f7f"]
_PNG_META = {"Software": "plotkit"}


@dataclass(frozen=True)
class PlotJob:
    traj_path: str
    meta_path: str
    kind: str
    out_path: str
    stride: int = 1
    labels: bool = True
    title: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PlotError(f"unknown figure kind {self.kind!r}; "
                            f"choose from {', '.join(KINDS)}")
        if self.stride < 1:
            raise PlotError("decimation stride must be >= 1")


def decimate_indices(num_samples: int, stride: int) -> np.ndarray:
    """Every stride-th sample, always keeping the first and last."""
    idx = np.arange(0, num_samples, stride)
    if idx[-1] != num_samples - 1:
        idx = np.append(idx, num_samples - 1)
    return idx


def _color(i: int) -> str:
    return _CYCLE[i % len(_CYCLE)]


def _draw_formation(ax, pts: np.ndarray, edges, linestyle: str,
                    marker: str) -> None:
    """pts is (N, n); edges are 1-based pairs."""
    for i, j in edges:
        seg = np.stack([pts[i - 1], pts[j - 1]])
        ax.plot(*seg.T, linestyle=linestyle, color="black", linewidth=0.9)
    ax.scatter(*pts.T, marker=marker, color="black", s=18, zorder=5)


def _render_paths(run: RunData, job: PlotJob, ax) -> None:
    idx = decimate_indices(run.num_samples, job.stride)
    pos = run.positions
    for i in range(run.num_agents):
        path = pos[idx, i, :]
        ax.plot(*path.T, color=_color(i), linewidth=1.0,
                label=f"agent {i + 1}" if job.labels else None)
    # overlays use the exact first and last samples, never decimated ones
    edges = run.edges()
    _draw_formation(ax, pos[0], edges, ":", "o")
    _draw_formation(ax, pos[-1], edges, "--", "s")
    if job.labels:
        ax.legend(loc="best", fontsize=8)


def _render_psi(run: RunData, job: PlotJob, ax) -> None:
    idx = decimate_indices(run.num_samples, job.stride)
    t = run.times[idx]
    ax.semilogy(t, np.maximum(run.psi[idx], 1e-300), color=_color(0),
                linewidth=1.2, label=r"$\psi(t)$" if job.labels else None)
    c_hat = run.meta.get("bound_c_hat")
    psi0 = float(run.psi[0])
    if c_hat is not None and np.isfinite(c_hat) and c_hat > 0 and psi0 > 0:
        env = 2.0 * psi0 / (1.0 + c_hat * psi0 * (t - run.times[0]))
        ax.semilogy(t, env, linestyle="--", color="black", linewidth=1.0,
                    label=r"$2\psi_0/(1+\hat{c}\psi_0 t)$"
                    if job.labels else None)
    ax.set_xlabel("t")
    ax.set_ylabel(r"$\psi$")
    if job.labels:
        ax.legend(loc="best", fontsize=8)


def render(job: PlotJob) -> str:
    """Render one job; returns the output path."""
    run = load_run(job.traj_path, job.meta_path)
    if job.kind == "paths-2d" and run.dim != 2:
        raise PlotError(f"paths-2d requires dim=2 data, sidecar says "
                        f"dim={run.dim}")
    if job.kind == "paths-3d" and run.dim != 3:
        raise PlotError(f"paths-3d requires dim=3 data, sidecar says "
                        f"dim={run.dim}")

    fig = plt.figure(figsize=FIGSIZE, dpi=DPI)
    try:
        if job.kind == "paths-3d":
            ax = fig.add_subplot(projection="3d")
            _render_paths(run, job, ax)
            ax.set_xlabel("x")
            ax.set_ylabel("y")
            ax.set_zlabel("z")
        elif job.kind == "paths-2d":
            ax = fig.add_subplot()
            _render_paths(run, job, ax)
            ax.set_xlabel("x")
            ax.set_ylabel("y")
            ax.set_aspect("equal", adjustable="datalim")
        else:
            ax = fig.add_subplot()
            _render_psi(run, job, ax)
        if job.title:
            ax.set_title(job.title)
        out = Path(job.out_path)
        out.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(out, dpi=DPI, metadata=_PNG_META)
    finally:
        plt.close(fig)
    return str(job.out_path)
