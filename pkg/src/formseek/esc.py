"""Output-only extremum seeking for control-affine systems.

The same dither construction used for the formation loop applies to any
driftless system x' = sum_k u_k B_k(x) with a nonnegative scalar output:
feed each input a fast sin/cos pair shaped by the output alone, and the
trajectory tracks a descent of the output along the span of the fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .dither import DitherShape
from .dynamics import Trajectory, bound_fit, integrate

__all__ = [
    "ControlAffineSystem",
    "esc_input",
    "esc_rhs",
    "simulate_esc",
    "esc_bound_check",
    "quadratic_demo",
    "quartic_demo",
    "span_violation_demo",
]


@dataclass(frozen=True)
class ControlAffineSystem:
    """Driftless control-affine system with a scalar nonnegative output.

    fields[k](x) returns the k-th control vector field at x; output(x)
    is the quantity to be driven to zero.  The output is the only piece
    of state information the control law reads.
    """

    state_dim: int
    fields: Sequence[Callable[[np.ndarray], np.ndarray]]
    output: Callable[[np.ndarray], float]
    name: str = "esc"

    def __post_init__(self):
        if self.state_dim < 1:
            raise ValueError("state_dim must be positive")
        if len(self.fields) < 1:
            raise ValueError("at least one control field required")

    @property
    def num_inputs(self) -> int:
        return len(self.fields)

    def output_checked(self, x: np.ndarray) -> float:
        y = float(self.output(x))
        if y < 0.0:
            raise ValueError(f"output must be nonnegative, got {y:.3e}")
        return y


def esc_input(shape: DitherShape, omega: float, phase: float,
              t: float, y: float) -> float:
    """Input for one channel: sqrt(w) cos(wt+phi) h1(y) + sqrt(w) sin(wt+phi) h2(y)."""
    root = np.sqrt(omega)
    theta = omega * t + phase
    return root * np.cos(theta) * shape.h(1, y) + \
        root * np.sin(theta) * shape.h(2, y)


def esc_rhs(sys: ControlAffineSystem, shape: DitherShape,
            omegas: np.ndarray, phases: np.ndarray,
            t: float, x: np.ndarray) -> np.ndarray:
    """Closed-loop right-hand side; reads the state only through the output."""
    y = sys.output_checked(x)
    h1 = float(shape.h(1, y))
    h2 = float(shape.h(2, y))
    out = np.zeros(sys.state_dim)
    for k in range(sys.num_inputs):
        w = omegas[k]
        theta = w * t + phases[k]
        u = math.sqrt(w) * (math.cos(theta) * h1 + math.sin(theta) * h2)
        out += u * sys.fields[k](x)
    return out


def simulate_esc(sys: ControlAffineSystem, shape: DitherShape,
                 omegas: Sequence[float], x0: np.ndarray,
                 t_final: float, dt: float | None = None,
                 phases: Sequence[float] | None = None,
                 t0: float = 0.0) -> Trajectory:
    """Integrate the extremum-seeking loop; observes the output as psi."""
    omegas = np.asarray(omegas, dtype=float)
    if omegas.size != sys.num_inputs:
        raise ValueError("one dither frequency per input required")
    if np.unique(omegas).size != omegas.size:
        raise ValueError("dither frequencies must be pairwise distinct")
    phases = np.zeros_like(omegas) if phases is None \
        else np.asarray(phases, dtype=float)
    if dt is None:
        dt = 2.0 * np.pi / (64.0 * float(np.max(omegas)))

    def rhs(t, x):
        return esc_rhs(sys, shape, omegas, phases, t, x)

    def observe(x):
        return sys.output_checked(x), None

    meta = {"system": sys.name, "omegas": list(map(float, omegas)),
            "phases": list(map(float, phases))}
    return integrate(rhs, np.asarray(x0, dtype=float), t0, t_final, dt,
                     observe=observe, metadata=meta)


def esc_bound_check(traj: Trajectory, floor: float = 1e-6) -> dict:
    """Fit the reciprocal decay envelope to the recorded output."""
    return bound_fit(traj, floor=floor)


# --------------------------------------------------------------------------
# Demo systems
# --------------------------------------------------------------------------

def quadratic_demo(target: Sequence[float] = (1.0, -0.5)) -> ControlAffineSystem:
    """Single integrator in the plane, output |x - target|^2; the two
    constant fields span the plane, so the output can be driven to zero."""
    tgt = np.asarray(target, dtype=float)
    e1 = np.array([1.0, 0.0])
    e2 = np.array([0.0, 1.0])
    return ControlAffineSystem(
        state_dim=2,
        fields=[lambda x: e1, lambda x: e2],
        output=lambda x: float(np.dot(x - tgt, x - tgt)),
        name="quadratic",
    )


def quartic_demo(target: Sequence[float] = (0.5, 0.25)) -> ControlAffineSystem:
    """Planar single integrator with the flatter output |x - target|^4."""
    tgt = np.asarray(target, dtype=float)
    e1 = np.array([1.0, 0.0])
    e2 = np.array([0.0, 1.0])
    return ControlAffineSystem(
        state_dim=2,
        fields=[lambda x: e1, lambda x: e2],
        output=lambda x: float(np.dot(x - tgt, x - tgt)) ** 2,
        name="quartic",
    )


def span_violation_demo(target: Sequence[float] = (1.0, 1.0)) -> ControlAffineSystem:
    """Only one control field in a 2-d state space: the output gradient
    leaves the span of the fields, so the output settles at a nonzero
    residual instead of decaying to zero."""
    tgt = np.asarray(target, dtype=float)
    e1 = np.array([1.0, 0.0])
    return ControlAffineSystem(
        state_dim=2,
        fields=[lambda x: e1],
        output=lambda x: float(np.dot(x - tgt, x - tgt)),
        name="span-violation",
    )
