"""Closed-loop, averaged (Lie bracket), and gradient-baseline dynamics with a
deterministic fixed-step RK4 integrator and the convergence-envelope fit.

The dither makes the closed-loop right-hand side rapidly oscillating, so the
step size is tied to the fastest sinusoid period (enforced dt <= period/32,
recommended period/64).  Adaptive controllers thrash on this kind of forcing,
hence the fixed step.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _fastpath
from .dither import AMPLITUDES, DitherShape, SinusoidSchedule
from .potential import (BodyFrames, FormationSpec, grad_psi_blocks,
                        psi_all_local, psi_global)

__all__ = [
    "SystemDef",
    "Trajectory",
    "IntegrationError",
    "closed_loop_rhs",
    "lie_bracket_rhs",
    "gradient_rhs",
    "integrate",
    "integrate_closed_loop",
    "default_dither_dt",
    "bound_fit",
    "save_trajectory",
    "load_trajectory",
]

CODE_VERSION = "formseek-0.1.0"

DT_ENFORCED_FRACTION = 32   # dt must satisfy dt <= (2*pi/omega_max)/32
DT_RECOMMENDED_FRACTION = 64

_AMP_KIND = {"tanh": _fastpath.AMP_TANH, "ratio": _fastpath.AMP_RATIO}


class IntegrationError(RuntimeError):
    """Raised when the state turns non-finite; carries the failing step and
    the last finite state."""

    def __init__(self, message: str, step: int, last_state: np.ndarray):
        super().__init__(message)
        self.step = step
        self.last_state = last_state


@dataclass(frozen=True)
class SystemDef:
    """Formation spec + body frames + dither shape + sinusoid schedule."""

    spec: FormationSpec
    frames: BodyFrames
    shape: DitherShape
    schedule: SinusoidSchedule

    def __post_init__(self):
        N, n = self.spec.num_agents, self.spec.dim
        if (self.frames.num_agents, self.frames.dim) != (N, n):
            raise ValueError("frames do not match the formation spec")
        if (self.schedule.num_agents, self.schedule.dim) != (N, n):
            raise ValueError("schedule does not match the formation spec")


@dataclass(frozen=True)
class Trajectory:
    """Uniform-grid state samples with recorded potential values."""

    t0: float
    dt: float
    states: np.ndarray = field(repr=False)       # (S, state_dim)
    psi: np.ndarray = field(repr=False)          # (S,)
    psi_locals: np.ndarray = field(repr=False)   # (S, N); N may be 0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.states.ndim != 2 or self.states.shape[0] == 0:
            raise ValueError("states must be a nonempty (S, dim) array")
        if self.psi.shape[0] != self.states.shape[0]:
            raise ValueError("psi record length mismatch")
        if self.psi_locals.shape[0] != self.states.shape[0]:
            raise ValueError("psi_locals record length mismatch")

    @property
    def num_samples(self) -> int:
        return self.states.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.num_samples)

    @property
    def t_final(self) -> float:
        return float(self.t0 + self.dt * (self.num_samples - 1))

    def final_state(self) -> np.ndarray:
        return self.states[-1]


def closed_loop_rhs(sys: SystemDef, t: float, p: np.ndarray) -> np.ndarray:
    """Dithered distance-only law: block i is
    sum_k [u_{(i,k,1)}(t) h1(psi_i) + u_{(i,k,2)}(t) h2(psi_i)] b_{i,k}.

    Each block depends on p only through agent i's own local potential.
    """
    spec = sys.spec
    yloc = psi_all_local(spec, p)
    h1v = np.asarray(sys.shape.h(1, yloc))
    h2v = np.asarray(sys.shape.h(2, yloc))
    w = sys.schedule.omegas
    theta = w * t + sys.schedule.phases
    root = np.sqrt(w)
    coeff = root * np.cos(theta) * h1v[:, None] + root * np.sin(theta) * h2v[:, None]
    vel = np.einsum("ik,ikd->id", coeff, sys.frames.vectors)
    return vel.reshape(-1)


def lie_bracket_rhs(sys: SystemDef, p: np.ndarray) -> np.ndarray:
    """Averaged system: block i is 1/2 * [h1,h2](psi_i) * grad_{p_i} psi.
    Frame-independent."""
    yloc = psi_all_local(sys.spec, p)
    hb = np.asarray(sys.shape.bracket(yloc))
    g = grad_psi_blocks(sys.spec, p)
    return (0.5 * hb[:, None] * g).reshape(-1)


def gradient_rhs(sys: SystemDef, p: np.ndarray) -> np.ndarray:
    """Negative-gradient baseline (requires relative positions)."""
    return -grad_psi_blocks(sys.spec, p).reshape(-1)


def _num_steps(t0: float, t_final: float, dt: float) -> int:
    if dt <= 0:
        raise ValueError("dt must be positive")
    if t_final < t0:
        raise ValueError("t_final must be >= t0")
    return max(1, int(math.ceil((t_final - t0) / dt - 1e-9)))


def default_dither_dt(schedule: SinusoidSchedule,
                      fraction: int = DT_RECOMMENDED_FRACTION) -> float:
    """Step tied to the fastest dither period: 2*pi/(fraction * omega_max)."""
    return 2.0 * math.pi / (fraction * schedule.omega_max)


def check_dither_dt(schedule: SinusoidSchedule, dt: float) -> None:
    limit = 2.0 * math.pi / (DT_ENFORCED_FRACTION * schedule.omega_max)
    if dt > limit * (1.0 + 1e-12):
        raise ValueError(
            f"dt={dt:.3e} exceeds the enforced closed-loop limit "
            f"{limit:.3e} (= fastest dither period / {DT_ENFORCED_FRACTION})")
    recommended = 2.0 * math.pi / (DT_RECOMMENDED_FRACTION * schedule.omega_max)
    if dt > recommended * (1.0 + 1e-12):
        warnings.warn(
            f"dt={dt:.3e} is above the recommended "
            f"fastest-period/{DT_RECOMMENDED_FRACTION} = {recommended:.3e}",
            stacklevel=2)


def integrate(rhs: Callable[[float, np.ndarray], np.ndarray],
              p0: np.ndarray, t0: float, t_final: float, dt: float,
              observe: Optional[Callable[[np.ndarray], tuple]] = None,
              metadata: Optional[dict] = None) -> Trajectory:
    """Classical fixed-step RK4; deterministic for identical inputs.

    `observe(p) -> (psi, psi_locals)` fills the recorded values; omit it for
    plain ODE work (zero records).  A non-finite state aborts with the step
    index and last finite state attached.
    """
    p = np.array(p0, dtype=float).reshape(-1)
    nsteps = _num_steps(t0, t_final, dt)
    if observe is None:
        observe = lambda q: (0.0, np.zeros(0))
    psi0, loc0 = observe(p)
    nloc = np.asarray(loc0).size
    states = np.empty((nsteps + 1, p.size))
    psis = np.empty(nsteps + 1)
    locs = np.empty((nsteps + 1, nloc))
    states[0] = p
    psis[0] = psi0
    locs[0] = loc0
    for step in range(nsteps):
        t = t0 + step * dt
        k1 = rhs(t, p)
        k2 = rhs(t + 0.5 * dt, p + 0.5 * dt * k1)
        k3 = rhs(t + 0.5 * dt, p + 0.5 * dt * k2)
        k4 = rhs(t + dt, p + dt * k3)
        p = p + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(p)):
            raise IntegrationError(
                f"non-finite state at step {step + 1} (t={t + dt:.6g})",
                step=step + 1, last_state=states[step].copy())
        states[step + 1] = p
        psis[step + 1], locs[step + 1] = observe(p)
    meta = dict(metadata or {})
    meta.setdefault("integrator", "rk4-python")
    meta.setdefault("code_version", CODE_VERSION)
    return Trajectory(t0=float(t0), dt=float(dt), states=states, psi=psis,
                      psi_locals=locs, metadata=meta)


def formation_observer(spec: FormationSpec):
    def observe(p):
        return psi_global(spec, p), psi_all_local(spec, p)
    return observe


def integrate_closed_loop(sys: SystemDef, p0: np.ndarray, t0: float,
                          t_final: float, dt: Optional[float] = None,
                          metadata: Optional[dict] = None) -> Trajectory:
    """Integrate the dithered closed loop, enforcing the dt threshold.

    Uses the compiled kernel for the named amplitude variants; any other
    shape falls back to the generic integrator on `closed_loop_rhs`.
    """
    if dt is None:
        dt = default_dither_dt(sys.schedule)
    check_dither_dt(sys.schedule, dt)
    meta = dict(metadata or {})
    meta.setdefault("law", "dither")
    if sys.shape.amplitude_name in _AMP_KIND:
        nsteps = _num_steps(t0, t_final, dt)
        ea, eb = sys.spec.graph.edge_arrays()
        states, psis, locs, bad = _fastpath.rk4_dither(
            np.array(p0, dtype=float).reshape(-1), float(t0), float(dt),
            nsteps, ea, eb, sys.spec.desired_sq, sys.frames.vectors,
            sys.schedule.omegas, sys.schedule.phases,
            _AMP_KIND[sys.shape.amplitude_name])
        if bad >= 0:
            raise IntegrationError(
                f"non-finite state at step {bad + 1} "
                f"(t={t0 + (bad + 1) * dt:.6g}); dt too large for omega_max="
                f"{sys.schedule.omega_max:g}?",
                step=bad + 1, last_state=states[-1].copy())
        meta.setdefault("integrator", "rk4-numba")
        meta.setdefault("code_version", CODE_VERSION)
        return Trajectory(t0=float(t0), dt=float(dt), states=states, psi=psis,
                          psi_locals=locs, metadata=meta)
    return integrate(lambda t, p: closed_loop_rhs(sys, t, p), p0, t0, t_final,
                     dt, observe=formation_observer(sys.spec), metadata=meta)


def bound_fit(traj: Trajectory, floor: float = 1e-6) -> dict:
    """Largest c_hat >= 0 with psi(t) <= 2 psi0 / (1 + c_hat psi0 (t - t0))
    at every sample; holds iff c_hat exceeds the floor.

    If some sample violates psi <= 2 psi0 no nonnegative constant works and
    c_hat = 0; if psi is identically zero any constant works (c_hat = inf).
    """
    psi = traj.psi
    psi0 = float(psi[0])
    if psi0 == 0.0:
        all_zero = bool(np.all(psi == 0.0))
        return {"c_hat": math.inf if all_zero else 0.0,
                "holds": all_zero, "psi0": psi0, "floor": floor}
    rel_t = traj.dt * np.arange(traj.num_samples)
    if np.any(psi > 2.0 * psi0):
        return {"c_hat": 0.0, "holds": False, "psi0": psi0, "floor": floor}
    mask = (rel_t > 0) & (psi > 0)
    if not np.any(mask):
        return {"c_hat": math.inf, "holds": True, "psi0": psi0, "floor": floor}
    c_hat = float(np.min((2.0 * psi0 / psi[mask] - 1.0) / (psi0 * rel_t[mask])))
    c_hat = max(c_hat, 0.0)
    return {"c_hat": c_hat, "holds": bool(c_hat > floor),
            "psi0": psi0, "floor": floor}


# --------------------------------------------------------------------------
# Persistence: CSV samples + JSON sidecar
# --------------------------------------------------------------------------

def _csv_header(num_agents: int, dim: int, num_locals: int) -> list[str]:
    cols = ["t"]
    for i in range(1, num_agents + 1):
        for d in range(1, dim + 1):
            cols.append(f"p_{i}_{d}")
    cols.append("psi")
    cols += [f"psi_{i}" for i in range(1, num_locals + 1)]
    return cols


def save_trajectory(traj: Trajectory, csv_path, meta_path,
                    num_agents: Optional[int] = None,
                    dim: Optional[int] = None) -> None:
    """Writes the sample table ('.' decimal, full round-trip precision) and
    the JSON sidecar with scenario/schedule metadata."""
    nloc = traj.psi_locals.shape[1]
    if num_agents is None:
        num_agents = traj.metadata.get("num_agents", nloc if nloc else 1)
    if dim is None:
        dim = traj.metadata.get("dim", traj.states.shape[1] // num_agents)
    header = _csv_header(num_agents, dim, nloc)
    times = traj.times
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for s in range(traj.num_samples):
            row = [repr(float(times[s]))]
            row += [repr(float(v)) for v in traj.states[s]]
            row.append(repr(float(traj.psi[s])))
            row += [repr(float(v)) for v in traj.psi_locals[s]]
            writer.writerow(row)
    meta = dict(traj.metadata)
    meta.update({
        "schema_version": 1,
        "t0": traj.t0,
        "dt": traj.dt,
        "num_samples": traj.num_samples,
        "num_agents": int(num_agents),
        "dim": int(dim),
        "code_version": traj.metadata.get("code_version", CODE_VERSION),
    })
    with open(meta_path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_trajectory(csv_path, meta_path) -> Trajectory:
    with open(meta_path) as fh:
        meta = json.load(fh)
    data = np.genfromtxt(csv_path, delimiter=",", names=True)
    names = list(data.dtype.names)
    table = np.vstack([data[name] for name in names]).T
    num_agents = int(meta["num_agents"])
    dim = int(meta["dim"])
    state_dim = num_agents * dim
    states = table[:, 1:1 + state_dim]
    psi = table[:, 1 + state_dim]
    locs = table[:, 2 + state_dim:]
    return Trajectory(t0=float(meta["t0"]), dt=float(meta["dt"]),
                      states=states, psi=psi, psi_locals=locs, metadata=meta)
