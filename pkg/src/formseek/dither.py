"""Dither function pairs (h1, h2), their admissibility checks, the sinusoid
schedule, and the averaging coefficients (eta, UV-tilde, v).

The default shape is h1(y) = A(y) sin(log y), h2(y) = A(y) cos(log y) for
y > 0 (zero otherwise) with bracket h2'h1 - h1'h2 = -A(y)^2 / y.  Admissible
amplitudes A must be bounded, C^2, vanish at 0, and have positive derivative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "DitherShape",
    "log_sinusoid_shape",
    "custom_shape",
    "verify_properties",
    "SinusoidSchedule",
    "u_eval",
    "eta_terms",
    "uv_tilde",
    "uv_tilde2",
    "v_coeff",
    "v_coeff_from_eta",
    "AMPLITUDES",
]

IMAG_RESIDUE_TOL = 1e-12

# Named amplitude variants: (A, A', A'').
AMPLITUDES: dict[str, tuple[Callable, Callable, Callable]] = {
    "tanh": (
        np.tanh,
        lambda y: 1.0 / np.cosh(y) ** 2,
        lambda y: -2.0 * np.tanh(y) / np.cosh(y) ** 2,
    ),
    "ratio": (
        lambda y: y / (1.0 + y),
        lambda y: 1.0 / (1.0 + y) ** 2,
        lambda y: -2.0 / (1.0 + y) ** 3,
    ),
}


@dataclass(frozen=True)
class DitherShape:
    """Pair (h1, h2) with first/second derivatives on (0, inf) and the
    bracket h = h2'h1 - h1'h2 (0 for y <= 0).

    All callables are vectorized over positive y; evaluation helpers below
    apply the y <= 0 cutoff.
    """

    name: str
    h1_pos: Callable[[np.ndarray], np.ndarray]
    h2_pos: Callable[[np.ndarray], np.ndarray]
    dh1_pos: Callable[[np.ndarray], np.ndarray]
    dh2_pos: Callable[[np.ndarray], np.ndarray]
    d2h1_pos: Callable[[np.ndarray], np.ndarray]
    d2h2_pos: Callable[[np.ndarray], np.ndarray]
    bracket_pos: Callable[[np.ndarray], np.ndarray]
    amplitude_name: str = "custom"

    def _cutoff(self, fn, y):
        y_arr = np.asarray(y, dtype=float)
        pos = y_arr > 0.0
        out = np.zeros_like(y_arr)
        if np.any(pos):
            out[pos] = fn(y_arr[pos])
        if np.isscalar(y) or y_arr.ndim == 0:
            return float(out)
        return out

    def h(self, nu: int, y):
        """h_nu(y); zero for y <= 0."""
        if nu not in (1, 2):
            raise ValueError("nu must be 1 or 2")
        return self._cutoff(self.h1_pos if nu == 1 else self.h2_pos, y)

    def dh(self, nu: int, y):
        return self._cutoff(self.dh1_pos if nu == 1 else self.dh2_pos, y)

    def d2h(self, nu: int, y):
        return self._cutoff(self.d2h1_pos if nu == 1 else self.d2h2_pos, y)

    def bracket(self, y):
        """[h1, h2](y) = h2'(y)h1(y) - h1'(y)h2(y); zero for y <= 0."""
        return self._cutoff(self.bracket_pos, y)


def log_sinusoid_shape(amplitude: str = "tanh") -> DitherShape:
    """The admissible pair h1 = A sin(log y), h2 = A cos(log y)."""
    if amplitude not in AMPLITUDES:
        raise ValueError(f"unknown amplitude {amplitude!r}; "
                         f"options: {sorted(AMPLITUDES)}")
    A, dA, d2A = AMPLITUDES[amplitude]

    def h1(y):
        return A(y) * np.sin(np.log(y))

    def h2(y):
        return A(y) * np.cos(np.log(y))

    def dh1(y):
        L = np.log(y)
        return dA(y) * np.sin(L) + A(y) * np.cos(L) / y

    def dh2(y):
        L = np.log(y)
        return dA(y) * np.cos(L) - A(y) * np.sin(L) / y

    def d2h1(y):
        L = np.log(y)
        s, c = np.sin(L), np.cos(L)
        return d2A(y) * s + 2.0 * dA(y) * c / y - A(y) * (s + c) / y**2

    def d2h2(y):
        L = np.log(y)
        s, c = np.sin(L), np.cos(L)
        return d2A(y) * c - 2.0 * dA(y) * s / y + A(y) * (s - c) / y**2

    def bracket(y):
        return -A(y) ** 2 / y

    return DitherShape(
        name=f"log-sinusoid[{amplitude}]",
        h1_pos=h1, h2_pos=h2,
        dh1_pos=dh1, dh2_pos=dh2,
        d2h1_pos=d2h1, d2h2_pos=d2h2,
        bracket_pos=bracket,
        amplitude_name=amplitude,
    )


def _fd(fn, y, eps_rel=1e-6):
    e = np.maximum(np.asarray(y) * eps_rel, 1e-14)
    return (fn(y + e) - fn(np.maximum(y - e, 1e-300))) / (2.0 * e)


def custom_shape(name: str, h1, h2, dh1=None, dh2=None,
                 d2h1=None, d2h2=None) -> DitherShape:
    """Shape from user callables; missing derivatives fall back to central
    finite differences (used for property checks only)."""
    dh1 = dh1 or (lambda y: _fd(h1, y))
    dh2 = dh2 or (lambda y: _fd(h2, y))
    d2h1 = d2h1 or (lambda y: _fd(dh1, y))
    d2h2 = d2h2 or (lambda y: _fd(dh2, y))

    def bracket(y):
        return dh2(y) * h1(y) - dh1(y) * h2(y)

    return DitherShape(name=name, h1_pos=h1, h2_pos=h2,
                       dh1_pos=dh1, dh2_pos=dh2,
                       d2h1_pos=d2h1, d2h2_pos=d2h2,
                       bracket_pos=bracket)


def _bounded_near_zero(y: np.ndarray, vals: np.ndarray,
                       split: float = 1e-6, blowup: float = 10.0) -> tuple[bool, float]:
    """Grid surrogate for 'remains bounded as y -> 0': the sup over the
    smallest decades must not exceed blowup x the sup over the rest."""
    vals = np.abs(vals)
    sup_all = float(np.max(vals))
    if not np.isfinite(sup_all):
        return False, sup_all
    tail = vals[y < split]
    head = vals[y >= split]
    if tail.size == 0 or head.size == 0:
        return True, sup_all
    ok = float(np.max(tail)) <= max(blowup * float(np.max(head)), 1e-8)
    return ok, sup_all


def verify_properties(shape: DitherShape, y_min: float = 1e-9,
                      y_max: float = 10.0, points: int = 400,
                      r: float = 1.0, c_floor: float = 1e-6) -> dict:
    """Grid check of the six admissibility properties of (h1, h2).

    Limit statements are sampled on a geometric grid; P(vi) reports the
    largest grid-consistent c with [h1,h2](y) <= -c*y on (0, r].
    Failures are reported, never raised.
    """
    y = np.geomspace(y_min, y_max, points)
    report: dict = {"shape": shape.name, "grid": {"y_min": y_min, "y_max": y_max,
                                                  "points": points, "r": r}}
    # P(i): zero on the closed left half line
    y_neg = np.array([-5.0, -1.0, -1e-12, 0.0])
    p1 = all(shape.h(nu, t) == 0.0 for nu in (1, 2) for t in y_neg)
    report["P1"] = {"passed": bool(p1)}

    # P(ii): bounded on the grid
    sup = max(float(np.max(np.abs(shape.h(nu, y)))) for nu in (1, 2))
    report["P2"] = {"passed": bool(np.isfinite(sup)), "sup": sup}

    # P(iii)-(v): boundedness as y -> 0 of h/y, h', h''*y
    for key, fn in (("P3", lambda nu: shape.h(nu, y) / y),
                    ("P4", lambda nu: shape.dh(nu, y)),
                    ("P5", lambda nu: shape.d2h(nu, y) * y)):
        ok = True
        sups = []
        for nu in (1, 2):
            good, s = _bounded_near_zero(y, np.asarray(fn(nu)))
            ok = ok and good
            sups.append(s)
        report[key] = {"passed": bool(ok), "sup": max(sups)}

    # P(vi): bracket <= -c*y on (0, r]
    yr = y[y <= r]
    hb = np.asarray(shape.bracket(yr))
    ratios = -hb / yr
    c_est = float(np.min(ratios)) if ratios.size else 0.0
    report["P6"] = {
        "passed": bool(c_est > c_floor),
        "c_est": c_est,
        "flagged_degenerate": bool(0.0 < c_est <= c_floor),
        "worst_y": float(yr[int(np.argmin(ratios))]) if ratios.size else None,
    }
    report["all_passed"] = all(report[k]["passed"] for k in
                               ("P1", "P2", "P3", "P4", "P5", "P6"))
    return report


# --------------------------------------------------------------------------
# Sinusoid schedule and averaging coefficients
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SinusoidSchedule:
    """Frequencies omega_{i,k} > 0 and phases phi_{i,k} for an N-agent,
    n-direction system, plus the global parameter omega (when built from
    the multiplier rule omega_{i,k} = omega*((i-1)n + k))."""

    omegas: np.ndarray = field(repr=False)   # (N, n)
    phases: np.ndarray = field(repr=False)   # (N, n)
    omega_global: Optional[float] = None
    rule: str = "explicit"

    def __post_init__(self):
        w = np.asarray(self.omegas, dtype=float)
        ph = np.asarray(self.phases, dtype=float)
        if w.ndim != 2 or ph.shape != w.shape:
            raise ValueError("omegas and phases must be matching (N, n) arrays")
        if np.any(w <= 0):
            raise ValueError("all frequencies must be positive")
        flat = w.reshape(-1)
        if len(set(flat.tolist())) != flat.size:
            raise ValueError("frequencies must be pairwise distinct")
        w = w.copy(); w.flags.writeable = False
        ph = ph.copy(); ph.flags.writeable = False
        object.__setattr__(self, "omegas", w)
        object.__setattr__(self, "phases", ph)

    @classmethod
    def from_rule(cls, num_agents: int, dim: int, omega: float,
                  phases=None) -> "SinusoidSchedule":
        """omega_{i,k} = omega * ((i-1)n + k): nN pairwise distinct values."""
        if omega <= 0:
            raise ValueError("omega must be positive")
        mult = np.arange(1, num_agents * dim + 1, dtype=float)
        w = (omega * mult).reshape(num_agents, dim)
        if phases is None:
            ph = np.zeros((num_agents, dim))
        else:
            ph = np.broadcast_to(np.asarray(phases, dtype=float),
                                 (num_agents, dim)).copy()
        return cls(w, ph, omega_global=float(omega), rule="multiplier")

    @property
    def num_agents(self) -> int:
        return self.omegas.shape[0]

    @property
    def dim(self) -> int:
        return self.omegas.shape[1]

    @property
    def omega_max(self) -> float:
        return float(np.max(self.omegas))

    def omega(self, i: int, k: int) -> float:
        return float(self.omegas[i - 1, k - 1])

    def phase(self, i: int, k: int) -> float:
        return float(self.phases[i - 1, k - 1])


def _check_m(schedule: SinusoidSchedule, m):
    i, k, nu = m
    if not (1 <= i <= schedule.num_agents and 1 <= k <= schedule.dim
            and nu in (1, 2)):
        raise ValueError(f"bad sinusoid index {m}")
    return i, k, nu


def u_eval(schedule: SinusoidSchedule, m, t):
    """u_{(i,k,1)}(t) = sqrt(w) cos(w t + phi); nu = 2 uses sin."""
    i, k, nu = _check_m(schedule, m)
    w = schedule.omega(i, k)
    phase = w * np.asarray(t, dtype=float) + schedule.phase(i, k)
    return math.sqrt(w) * (np.cos(phase) if nu == 1 else np.sin(phase))


def eta_terms(schedule: SinusoidSchedule, m) -> list[tuple[float, complex]]:
    """The signed frequencies Omega(m) = {+w, -w} with their complex
    coefficients eta, such that u_m(t) = sum eta * exp(i*omega*t)."""
    i, k, nu = _check_m(schedule, m)
    w = schedule.omega(i, k)
    phi = schedule.phase(i, k)
    root = math.sqrt(w)
    if nu == 1:
        return [(w, root * np.exp(1j * phi) / 2.0),
                (-w, root * np.exp(-1j * phi) / 2.0)]
    return [(w, root * np.exp(1j * phi) / (2.0 * 1j)),
            (-w, -root * np.exp(-1j * phi) / (2.0 * 1j))]


def _real(z: complex) -> float:
    if abs(z.imag) > IMAG_RESIDUE_TOL * max(1.0, abs(z.real)):
        raise ArithmeticError(f"imaginary residue {z.imag:.3e} exceeds tolerance")
    return float(z.real)


def uv_tilde(schedule: SinusoidSchedule, m, t: float) -> float:
    """UV-tilde_m(t) = -sum_omega eta/(i*omega) * exp(i*omega*t).

    Closed form: -sin(wt+phi)/sqrt(w) for nu = 1, +cos(wt+phi)/sqrt(w)
    for nu = 2 (used as a test oracle, not here).
    """
    total = 0.0 + 0.0j
    for w, eta in eta_terms(schedule, m):
        total -= eta / (1j * w) * np.exp(1j * w * t)
    return _real(total)


def uv_tilde2(schedule: SinusoidSchedule, m2, m1, t: float) -> float:
    """UV-tilde_{m2,m1}(t): double sum over Omega(m2) x Omega(m1) with
    w2 + w1 != 0 of eta2*eta1 / (i^2 * w1 * (w2+w1)) * exp(i(w2+w1)t)."""
    total = 0.0 + 0.0j
    for w2, eta2 in eta_terms(schedule, m2):
        for w1, eta1 in eta_terms(schedule, m1):
            if w2 + w1 == 0.0:
                continue
            total += eta2 * eta1 / ((1j**2) * w1 * (w2 + w1)) \
                * np.exp(1j * (w2 + w1) * t)
    return _real(total)


def v_coeff(m2, m1) -> float:
    """Surviving averaged coefficient: +1/2 when m2, m1 share (i,k) with
    nu2 = 1, nu1 = 2; -1/2 with the roles of nu swapped; else 0."""
    i2, k2, nu2 = m2
    i1, k1, nu1 = m1
    if (i2, k2) == (i1, k1):
        if nu2 == 1 and nu1 == 2:
            return 0.5
        if nu2 == 2 and nu1 == 1:
            return -0.5
    return 0.0


def v_coeff_from_eta(schedule: SinusoidSchedule, m2, m1) -> float:
    """Independent evaluation of v_{m2,m1} from the eta coefficients:
    -sum over resonant pairs (w2 + w1 = 0) of eta2*eta1/(i*w1)."""
    total = 0.0 + 0.0j
    for w2, eta2 in eta_terms(schedule, m2):
        for w1, eta1 in eta_terms(schedule, m1):
            if w2 + w1 == 0.0:
                total -= eta2 * eta1 / (1j * w1)
    return _real(total)


def all_m_indices(num_agents: int, dim: int) -> list[tuple[int, int, int]]:
    """Canonical flat ordering of the index set: (i, k, nu) with nu fastest."""
    return [(i, k, nu)
            for i in range(1, num_agents + 1)
            for k in range(1, dim + 1)
            for nu in (1, 2)]
