"""Read the trajectory CSV + JSON sidecar contract.

The CSV has columns t, p_1_1 .. p_N_n, psi and optionally psi_1 .. psi_N;
the sidecar declares num_agents, dim and carries run metadata (edge list,
fitted envelope constant, ...).  This module owns all parsing and
validation; nothing here imports from the simulator.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["PlotError", "RunData", "load_run"]


class PlotError(ValueError):
    """Input files do not satisfy the CSV/sidecar contract."""


@dataclass(frozen=True)
class RunData:
    """One simulation run: positions (S, N, n), potentials, metadata."""

    times: np.ndarray = field(repr=False)
    positions: np.ndarray = field(repr=False)   # shape (S, N, n)
    psi: np.ndarray = field(repr=False)
    meta: dict = field(repr=False)

    @property
    def num_agents(self) -> int:
        return self.positions.shape[1]

    @property
    def dim(self) -> int:
        return self.positions.shape[2]

    @property
    def num_samples(self) -> int:
        return self.positions.shape[0]

    def edges(self) -> list[tuple[int, int]]:
        """1-based vertex pairs from the sidecar, empty if not recorded."""
        return [tuple(e) for e in self.meta.get("graph_edges", [])]


def _expected_columns(num_agents: int, dim: int) -> list[str]:
    cols = ["t"]
    for i in range(1, num_agents + 1):
        cols += [f"p_{i}_{k}" for k in range(1, dim + 1)]
    cols.append("psi")
    return cols


def load_run(traj_path, meta_path) -> RunData:
    meta_path = Path(meta_path)
    traj_path = Path(traj_path)
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise PlotError(f"sidecar {meta_path} is not valid JSON: {exc}")
    for key in ("num_agents", "dim"):
        if key not in meta:
            raise PlotError(f"sidecar {meta_path} lacks required key {key!r}")
    N, n = int(meta["num_agents"]), int(meta["dim"])

    with open(traj_path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PlotError(f"{traj_path} is empty")
        rows = [row for row in reader if row]
    expected = _expected_columns(N, n)
    if header[:len(expected)] != expected:
        raise PlotError(
            f"{traj_path} columns do not match sidecar N={N}, n={n}: "
            f"expected {expected[:4]}...{expected[-1:]}, "
            f"got {header[:4]}...{header[len(expected)-1:len(expected)]}")
    if not rows:
        raise PlotError(f"{traj_path} has a header but no samples")

    try:
        table = np.array(rows, dtype=float)
    except ValueError as exc:
        raise PlotError(f"{traj_path} has a non-numeric entry: {exc}")
    if table.shape[1] < len(expected):
        raise PlotError(f"{traj_path} rows are shorter than the header")

    times = table[:, 0]
    positions = table[:, 1:1 + N * n].reshape(-1, N, n)
    psi = table[:, 1 + N * n]
    return RunData(times=times, positions=positions, psi=psi, meta=meta)
