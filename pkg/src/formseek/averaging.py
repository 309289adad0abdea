"""Averaging bookkeeping along closed-loop trajectories: iterated Lie
derivatives of the global potential along the control fields, the averaged
descent term, and the integral-identity residual that certifies the
trajectory follows the averaged system plus explicit remainders.

The potential is a quartic polynomial in the stacked positions, so the
iterated Lie derivatives have exact closed forms; a nested finite-difference
evaluator is kept for cross-validation.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import cumulative_simpson

from .dither import all_m_indices, eta_terms, uv_tilde, uv_tilde2
from .dynamics import SystemDef, Trajectory, check_dither_dt
from .potential import psi_all_local, psi_global

__all__ = [
    "lie_tensors",
    "assemble_first",
    "assemble_second",
    "assemble_third",
    "y_psi",
    "d1_psi",
    "d2_psi",
    "averaging_residual",
    "xm_psi_fd",
    "xm2_xm1_psi_fd",
    "xm3_xm2_xm1_psi_fd",
]

_TINY_Y = 1e-250   # below this the dither factors are exactly at their cutoff


def _geometry(sys: SystemDef, p: np.ndarray):
    spec = sys.spec
    N, n = spec.num_agents, spec.dim
    pts = np.asarray(p, dtype=float).reshape(N, n)
    ea, eb = spec.graph.edge_arrays()
    w = pts[ea] - pts[eb]                       # (M, n)
    err = np.einsum("ed,ed->e", w, w) - spec.desired_sq
    M = ea.size
    sign = np.zeros((N, M))
    sign[ea, np.arange(M)] = 1.0
    sign[eb, np.arange(M)] = -1.0
    incident = np.abs(sign)
    return pts, ea, eb, w, err, sign, incident


def lie_tensors(sys: SystemDef, p: np.ndarray) -> dict:
    """Exact building blocks at a point, indexed by the nN frame directions
    mu = (i, k):

      y      (N,)        local potentials
      g      (K,)        first derivative of psi along B_mu
      A      (K, N)      derivative of psi_i along B_mu
      H      (K, K)      second derivative of psi along (B_mu, B_mu')
      Hloc   (N, K, K)   second derivative of psi_i
      T3     (K, K, K)   third derivative of psi (fourth is constant)
    """
    frames = sys.frames.vectors                 # (N, n, n)
    N, n = frames.shape[0], frames.shape[1]
    _, ea, eb, w, err, sign, incident = _geometry(sys, p)
    y = psi_all_local(sys.spec, p)

    b_flat = frames.reshape(N * n, n)           # row mu = (i, k)
    agent = np.repeat(np.arange(N), n)          # agent index per mu
    sign_mu = sign[agent]                       # (K, M)

    bw = b_flat @ w.T                           # (K, M) <b_mu, w_e>
    beta = bw * sign_mu                         # (K, M) <w_e, (B_mu)_e>
    bb = b_flat @ b_flat.T                      # (K, K)
    delta = bb[:, :, None] * sign_mu[:, None, :] * sign_mu[None, :, :]

    g = beta @ err
    A = np.einsum("pe,ie,e->pi", beta, incident, err)
    H = 2.0 * beta @ beta.T + np.einsum("pqe,e->pq", delta, err)
    Hloc = (2.0 * np.einsum("ie,pe,qe->ipq", incident, beta, beta)
            + np.einsum("ie,e,pqe->ipq", incident, err, delta))
    T3 = 2.0 * (np.einsum("ae,bce->abc", beta, delta)
                + np.einsum("be,ace->abc", beta, delta)
                + np.einsum("ce,abe->abc", beta, delta))
    return {"y": y, "g": g, "A": A, "H": H, "Hloc": Hloc, "T3": T3,
            "agent": agent}


def _h_factors(sys: SystemDef, y: np.ndarray):
    """h, h', h'' per flat Lambda index m = 2*mu + (nu-1)."""
    shape = sys.shape
    N, n = sys.spec.num_agents, sys.spec.dim
    agent_m = np.repeat(np.repeat(np.arange(N), n), 2)
    nu_m = np.tile([1, 2], N * n)
    ym = np.where(y[agent_m] > _TINY_Y, y[agent_m], 0.0)
    h = np.array([shape.h(int(nu), yy) for nu, yy in zip(nu_m, ym)])
    hd = np.array([shape.dh(int(nu), yy) for nu, yy in zip(nu_m, ym)])
    hdd = np.array([shape.d2h(int(nu), yy) for nu, yy in zip(nu_m, ym)])
    mu_m = np.repeat(np.arange(N * n), 2)
    return h, hd, hdd, mu_m, agent_m


def assemble_first(sys: SystemDef, tensors: dict) -> np.ndarray:
    """X_m psi for all m in Lambda (2K values)."""
    h, _, _, mu_m, _ = _h_factors(sys, tensors["y"])
    return h * tensors["g"][mu_m]


def assemble_second(sys: SystemDef, tensors: dict) -> np.ndarray:
    """X_{m2}(X_{m1} psi) as a (2K, 2K) array indexed [m2, m1]."""
    h, hd, _, mu_m, agent_m = _h_factors(sys, tensors["y"])
    g, A, H = tensors["g"], tensors["A"], tensors["H"]
    A_ab = A[mu_m][:, agent_m]                  # A[mu_a, i_b]
    H_ab = H[np.ix_(mu_m, mu_m)]                # H[mu_a, mu_b]
    # inner[m2, m1] = h'_{nu1}(y_{i1}) A[mu2, i1] g[mu1] + h_{nu1} H[mu2, mu1]
    inner = hd[None, :] * A_ab * g[mu_m][None, :] + h[None, :] * H_ab
    return h[:, None] * inner


def assemble_third(sys: SystemDef, tensors: dict) -> np.ndarray:
    """X_{m3}(X_{m2}(X_{m1} psi)) as a (2K, 2K, 2K) array [m3, m2, m1]."""
    h, hd, hdd, mu_m, agent_m = _h_factors(sys, tensors["y"])
    g, A, H = tensors["g"], tensors["A"], tensors["H"]
    g_m = g[mu_m]
    A_ab = A[mu_m][:, agent_m]                  # A[mu_a, i_b]
    H_ab = H[np.ix_(mu_m, mu_m)]                # H[mu_a, mu_b]
    # Hloc_abc[a, b, c] = D^2 psi_{i_c}(B_{mu_a}, B_{mu_b})
    Hloc_abc = tensors["Hloc"][np.ix_(agent_m, mu_m, mu_m)].transpose(1, 2, 0)
    # T3_abc[a, b, c] = D^3 psi(B_{mu_a}, B_{mu_b}, B_{mu_c}) (symmetric)
    T3_abc = tensors["T3"][np.ix_(mu_m, mu_m, mu_m)]

    # inner bracket of assemble_second, indexed [m2, m1]
    inner = hd[None, :] * A_ab * g_m[None, :] + h[None, :] * H_ab
    # derivative of that bracket along B_{mu3}, axes (m3, m2, m1)
    inner_d = (
        hdd[None, None, :] * A_ab[:, None, :] * A_ab[None, :, :]
        * g_m[None, None, :]
        + hd[None, None, :] * (
            Hloc_abc * g_m[None, None, :]                     # Hloc[i1; mu3,mu2]
            + A_ab[None, :, :] * H_ab[:, None, :]             # A[mu2,i1] H[mu3,mu1]
            + A_ab[:, None, :] * H_ab[None, :, :]             # A[mu3,i1] H[mu2,mu1]
        )
        + h[None, None, :] * T3_abc.transpose(1, 2, 0)        # T3[mu2,mu1,mu3]
    )
    return h[:, None, None] * (
        hd[None, :, None] * A_ab[:, :, None] * inner[None, :, :]
        + h[None, :, None] * inner_d)


def y_psi(sys: SystemDef, p: np.ndarray) -> float:
    """Lie derivative of psi along the averaged field:
    1/2 sum_{i,k} [h1,h2](psi_i) (B_{i,k} psi)^2."""
    tensors = lie_tensors(sys, p)
    hb = np.asarray(sys.shape.bracket(tensors["y"]))
    g2 = tensors["g"].reshape(sys.spec.num_agents, sys.spec.dim) ** 2
    return 0.5 * float(np.sum(hb[:, None] * g2))


def _time_factors(sys: SystemDef, t: float):
    ms = all_m_indices(sys.spec.num_agents, sys.spec.dim)
    u = np.array([_u(sys, m, t) for m in ms])
    uv = np.array([uv_tilde(sys.schedule, m, t) for m in ms])
    uv2 = np.array([[uv_tilde2(sys.schedule, m2, m1, t) for m1 in ms]
                    for m2 in ms])
    return u, uv, uv2


def _u(sys: SystemDef, m, t):
    total = 0.0 + 0.0j
    for w, eta in eta_terms(sys.schedule, m):
        total += eta * np.exp(1j * w * t)
    return float(total.real)


def _time_factor_series(sys: SystemDef, times: np.ndarray):
    """Vectorized u, UV-tilde, UV-tilde2 over a time grid."""
    ms = all_m_indices(sys.spec.num_agents, sys.spec.dim)
    L = len(ms)
    S = times.size
    u = np.zeros((S, L))
    uv = np.zeros((S, L))
    for a, m in enumerate(ms):
        for w, eta in eta_terms(sys.schedule, m):
            phase = np.exp(1j * w * times)
            u[:, a] += (eta * phase).real
            uv[:, a] += (-eta / (1j * w) * phase).real
    uv2 = np.zeros((S, L, L))
    for a, m2 in enumerate(ms):
        for b, m1 in enumerate(ms):
            for w2, eta2 in eta_terms(sys.schedule, m2):
                for w1, eta1 in eta_terms(sys.schedule, m1):
                    if w2 + w1 == 0.0:
                        continue
                    coeff = eta2 * eta1 / ((1j**2) * w1 * (w2 + w1))
                    uv2[:, a, b] += (coeff * np.exp(1j * (w2 + w1) * times)).real
    return u, uv, uv2


def d1_psi(sys: SystemDef, t: float, p: np.ndarray) -> float:
    """First remainder: -sum UV_m X_m psi - sum UV_{m2,m1} X_{m2}(X_{m1} psi)."""
    tensors = lie_tensors(sys, p)
    F = assemble_first(sys, tensors)
    G = assemble_second(sys, tensors)
    _, uv, uv2 = _time_factors(sys, t)
    return float(-uv @ F - np.einsum("ab,ab->", uv2, G))


def d2_psi(sys: SystemDef, t: float, p: np.ndarray) -> float:
    """Second remainder: sum u_{m3} UV_{m2,m1} X_{m3}(X_{m2}(X_{m1} psi))."""
    tensors = lie_tensors(sys, p)
    T = assemble_third(sys, tensors)
    u, _, uv2 = _time_factors(sys, t)
    return float(np.einsum("a,bc,abc->", u, uv2, T))


def averaging_residual(sys: SystemDef, traj: Trajectory,
                       t_start: float | None = None,
                       t_end: float | None = None) -> dict:
    """Residual of the exact propagation identity along a closed-loop
    trajectory window:

      psi(t) = psi(t0) + int Y psi ds - D1(t0, p(t0)) + D1(t, p(t))
               + int D2(s, p(s)) ds

    evaluated with closed-form Lie derivatives and composite Simpson
    quadrature on the trajectory grid.  Also reports the remainder shape
    ratios |D1|/psi^{3/2} and |D2|/psi^{5/2} along the window.
    """
    check_dither_dt(sys.schedule, traj.dt)
    times = traj.times
    lo = 0 if t_start is None else int(np.searchsorted(times, t_start - 1e-12))
    hi = traj.num_samples - 1 if t_end is None else \
        int(np.searchsorted(times, t_end + 1e-12) - 1)
    if hi - lo < 2:
        raise ValueError("window too short for quadrature")
    idx = np.arange(lo, hi + 1)
    tt = times[idx]
    S = idx.size

    u_s, uv_s, uv2_s = _time_factor_series(sys, tt)
    psi_s = np.empty(S)
    ypsi_s = np.empty(S)
    d1_s = np.empty(S)
    d2_s = np.empty(S)
    for s, j in enumerate(idx):
        p = traj.states[j]
        tensors = lie_tensors(sys, p)
        F = assemble_first(sys, tensors)
        G = assemble_second(sys, tensors)
        T = assemble_third(sys, tensors)
        hb = np.asarray(sys.shape.bracket(tensors["y"]))
        g2 = tensors["g"].reshape(sys.spec.num_agents, sys.spec.dim) ** 2
        psi_s[s] = psi_global(sys.spec, p)
        ypsi_s[s] = 0.5 * np.sum(hb[:, None] * g2)
        d1_s[s] = -uv_s[s] @ F - np.einsum("ab,ab->", uv2_s[s], G)
        d2_s[s] = np.einsum("a,bc,abc->", u_s[s], uv2_s[s], T)

    int_y = cumulative_simpson(ypsi_s, dx=traj.dt, initial=0.0)
    int_d2 = cumulative_simpson(d2_s, dx=traj.dt, initial=0.0)
    predicted = psi_s[0] + int_y - d1_s[0] + d1_s + int_d2
    residual = psi_s - predicted

    with np.errstate(divide="ignore", invalid="ignore"):
        c1_ratio = np.where(psi_s > 0, np.abs(d1_s) / psi_s**1.5, 0.0)
        c2_ratio = np.where(psi_s > 0, np.abs(d2_s) / psi_s**2.5, 0.0)
    return {
        "t_window": (float(tt[0]), float(tt[-1])),
        "num_samples": S,
        "psi_start": float(psi_s[0]),
        "max_abs_residual": float(np.max(np.abs(residual))),
        "max_rel_residual": float(np.max(np.abs(residual)) / psi_s[0])
        if psi_s[0] > 0 else 0.0,
        "max_abs_d1": float(np.max(np.abs(d1_s))),
        "max_abs_d2": float(np.max(np.abs(d2_s))),
        "max_abs_ypsi": float(np.max(np.abs(ypsi_s))),
        "c1_hat": float(np.max(c1_ratio)),
        "c2_hat": float(np.max(c2_ratio)),
        "residual_series": residual,
        "psi_series": psi_s,
        "times": tt,
    }


# --------------------------------------------------------------------------
# Nested finite-difference cross-validation
# --------------------------------------------------------------------------

def _x_field(sys: SystemDef, m, p: np.ndarray) -> np.ndarray:
    i, k, nu = m
    y = psi_all_local(sys.spec, p)[i - 1]
    out = np.zeros(p.size)
    n = sys.spec.dim
    out[(i - 1) * n:i * n] = sys.shape.h(nu, y) * sys.frames.vector(i, k)
    return out


def xm_psi_fd(sys: SystemDef, m, p: np.ndarray) -> float:
    """X_m psi without closed forms (h factor times a directional value)."""
    i, k, nu = m
    y = psi_all_local(sys.spec, p)[i - 1]
    from .potential import lie_derivative_B
    return sys.shape.h(nu, y) * lie_derivative_B(sys.spec, sys.frames, i, k, p)


def _directional_fd(fn, sys: SystemDef, m_outer, p: np.ndarray,
                    eps: float = 1e-5) -> float:
    v = _x_field(sys, m_outer, p)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        return 0.0
    step = eps / norm
    return (fn(p + step * v) - fn(p - step * v)) / (2.0 * step) * 1.0


def xm2_xm1_psi_fd(sys: SystemDef, m2, m1, p: np.ndarray,
                   eps: float = 1e-5) -> float:
    return _directional_fd(lambda q: xm_psi_fd(sys, m1, q), sys, m2, p, eps)


def xm3_xm2_xm1_psi_fd(sys: SystemDef, m3, m2, m1, p: np.ndarray,
                       eps: float = 1e-4) -> float:
    return _directional_fd(lambda q: xm2_xm1_psi_fd(sys, m2, m1, q, eps),
                           sys, m3, p, eps)
