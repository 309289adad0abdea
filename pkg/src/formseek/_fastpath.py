"""Numba kernels for the dithered closed loop.

The dither forces the step size down to a fraction of the fastest sinusoid
period, so desk-scale horizons take hundreds of thousands of RK4 steps; the
pure-numpy right-hand side is kept as the reference implementation and these
loops as the production path.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

AMP_TANH = 0
AMP_RATIO = 1


@njit(cache=True)
def _potentials(p, ea, eb, d2, n, yloc):
    """Fills yloc with the local potentials; returns the global potential."""
    N = yloc.size
    for i in range(N):
        yloc[i] = 0.0
    total = 0.0
    for e in range(ea.size):
        s = 0.0
        for d in range(n):
            diff = p[ea[e] * n + d] - p[eb[e] * n + d]
            s += diff * diff
        err = s - d2[e]
        err2 = err * err
        total += err2
        yloc[ea[e]] += err2
        yloc[eb[e]] += err2
    for i in range(N):
        yloc[i] *= 0.25
    return 0.25 * total


@njit(cache=True)
def _dither_rhs(t, p, out, ea, eb, d2, frames, omegas, phases, amp_kind, yloc):
    N = frames.shape[0]
    n = frames.shape[1]
    _potentials(p, ea, eb, d2, n, yloc)
    for idx in range(p.size):
        out[idx] = 0.0
    for i in range(N):
        y = yloc[i]
        if y > 0.0:
            if amp_kind == AMP_TANH:
                amp = math.tanh(y)
            else:
                amp = y / (1.0 + y)
            logy = math.log(y)
            h1 = amp * math.sin(logy)
            h2 = amp * math.cos(logy)
        else:
            h1 = 0.0
            h2 = 0.0
        for k in range(n):
            w = omegas[i, k]
            theta = w * t + phases[i, k]
            root = math.sqrt(w)
            coeff = root * math.cos(theta) * h1 + root * math.sin(theta) * h2
            for d in range(n):
                out[i * n + d] += coeff * frames[i, k, d]


@njit(cache=True)
def rk4_dither(p0, t0, dt, nsteps, ea, eb, d2, frames, omegas, phases, amp_kind):
    """Classical RK4 on the dithered closed loop.

    Returns (states, psi, psi_locals, bad_step); bad_step is -1 on success,
    otherwise the index of the first step that produced a non-finite state.
    """
    dimp = p0.size
    N = frames.shape[0]
    n = frames.shape[1]
    states = np.empty((nsteps + 1, dimp))
    psis = np.empty(nsteps + 1)
    psilocs = np.empty((nsteps + 1, N))
    yloc = np.empty(N)
    k1 = np.empty(dimp)
    k2 = np.empty(dimp)
    k3 = np.empty(dimp)
    k4 = np.empty(dimp)
    tmp = np.empty(dimp)
    p = p0.copy()
    states[0] = p
    psis[0] = _potentials(p, ea, eb, d2, n, yloc)
    psilocs[0] = yloc
    for step in range(nsteps):
        t = t0 + step * dt
        _dither_rhs(t, p, k1, ea, eb, d2, frames, omegas, phases, amp_kind, yloc)
        for idx in range(dimp):
            tmp[idx] = p[idx] + 0.5 * dt * k1[idx]
        _dither_rhs(t + 0.5 * dt, tmp, k2, ea, eb, d2, frames, omegas, phases,
                    amp_kind, yloc)
        for idx in range(dimp):
            tmp[idx] = p[idx] + 0.5 * dt * k2[idx]
        _dither_rhs(t + 0.5 * dt, tmp, k3, ea, eb, d2, frames, omegas, phases,
                    amp_kind, yloc)
        for idx in range(dimp):
            tmp[idx] = p[idx] + dt * k3[idx]
        _dither_rhs(t + dt, tmp, k4, ea, eb, d2, frames, omegas, phases,
                    amp_kind, yloc)
        ok = True
        for idx in range(dimp):
            p[idx] += dt / 6.0 * (k1[idx] + 2.0 * k2[idx] + 2.0 * k3[idx] + k4[idx])
            if not math.isfinite(p[idx]):
                ok = False
        if not ok:
            return states[:step + 1], psis[:step + 1], psilocs[:step + 1], step
        states[step + 1] = p
        psis[step + 1] = _potentials(p, ea, eb, d2, n, yloc)
        psilocs[step + 1] = yloc
    return states, psis, psilocs, -1
