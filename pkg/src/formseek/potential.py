"""Local and global formation potentials, their gradients, and empirical
checks of the quadratic gradient bounds near a rigid target formation.

The global potential is psi(p) = 1/4 * sum_{ij in E} (||p_j-p_i||^2 - d_ij^2)^2;
the local potential psi_i restricts the sum to edges incident to agent i and
is computable from agent i's own distance measurements.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .rigidity import Framework, Graph, rigidity_matrix

__all__ = [
    "FormationSpec",
    "BodyFrames",
    "psi_local",
    "psi_all_local",
    "psi_global",
    "grad_psi",
    "grad_psi_blocks",
    "lie_derivative_B",
    "verify_gradient_bounds",
]


@dataclass(frozen=True)
class FormationSpec:
    """Graph plus desired distances; stores d_ij^2 in canonical edge order."""

    graph: Graph
    dim: int
    desired_sq: np.ndarray = field(repr=False)

    def __post_init__(self):
        d2 = np.asarray(self.desired_sq, dtype=float).reshape(-1)
        if d2.size != self.graph.num_edges:
            raise ValueError("one desired distance per edge required")
        if np.any(d2 < 0):
            raise ValueError("desired squared distances must be nonnegative")
        d2 = d2.copy()
        d2.flags.writeable = False
        object.__setattr__(self, "desired_sq", d2)

    @classmethod
    def from_distances(cls, graph: Graph, dim: int,
                       desired: Mapping[tuple[int, int], float]) -> "FormationSpec":
        d2 = np.zeros(graph.num_edges)
        seen = set()
        for (i, j), dij in desired.items():
            if dij < 0:
                raise ValueError(f"negative desired distance for edge {{{i},{j}}}")
            idx = graph.edge_index(i, j)
            if idx in seen:
                raise ValueError(f"edge {{{i},{j}}} given twice")
            seen.add(idx)
            d2[idx] = dij * dij
        if len(seen) != graph.num_edges:
            raise ValueError("desired distances missing for some edges")
        return cls(graph, dim, d2)

    @property
    def num_agents(self) -> int:
        return self.graph.num_vertices

    def desired_distances(self) -> np.ndarray:
        return np.sqrt(self.desired_sq)


def _gram_schmidt(vectors: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Orthonormalize rows in order; raises if the rows do not span."""
    n = vectors.shape[0]
    out = np.array(vectors, dtype=float)
    for k in range(n):
        for j in range(k):
            out[k] -= np.dot(out[k], out[j]) * out[j]
        norm = np.linalg.norm(out[k])
        if norm < tol:
            raise ValueError(f"frame vector {k + 1} is linearly dependent; "
                             "cannot orthonormalize")
        out[k] /= norm
        # second pass for orthonormality well below 1e-12
        for j in range(k):
            out[k] -= np.dot(out[k], out[j]) * out[j]
        out[k] /= np.linalg.norm(out[k])
    return out


@dataclass(frozen=True)
class BodyFrames:
    """Per-agent orthonormal velocity directions b_{i,1..n}, shape (N, n, n).

    frames[i-1, k-1] is b_{i,k}.  Input vectors are Gram-Schmidt sanitized
    at construction.
    """

    vectors: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=float)
        if v.ndim != 3 or v.shape[1] != v.shape[2]:
            raise ValueError("frames must have shape (N, n, n)")
        v = np.stack([_gram_schmidt(v[i]) for i in range(v.shape[0])])
        v.flags.writeable = False
        object.__setattr__(self, "vectors", v)

    @property
    def num_agents(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @staticmethod
    def identity(num_agents: int, dim: int) -> "BodyFrames":
        return BodyFrames(np.broadcast_to(np.eye(dim), (num_agents, dim, dim)).copy())

    def vector(self, i: int, k: int) -> np.ndarray:
        """b_{i,k} with 1-based indices."""
        return self.vectors[i - 1, k - 1]


def _edge_errors(spec: FormationSpec, p: np.ndarray):
    pts = np.asarray(p, dtype=float).reshape(spec.num_agents, spec.dim)
    a, b = spec.graph.edge_arrays()
    w = pts[a] - pts[b]
    err = np.einsum("ed,ed->e", w, w) - spec.desired_sq
    return pts, a, b, w, err


def psi_global(spec: FormationSpec, p: np.ndarray) -> float:
    _, _, _, _, err = _edge_errors(spec, p)
    return 0.25 * float(np.dot(err, err))


def psi_all_local(spec: FormationSpec, p: np.ndarray) -> np.ndarray:
    """All local potentials psi_1..psi_N at once."""
    _, a, b, _, err = _edge_errors(spec, p)
    out = np.zeros(spec.num_agents)
    np.add.at(out, a, err * err)
    np.add.at(out, b, err * err)
    return 0.25 * out


def psi_local(spec: FormationSpec, i: int, p: np.ndarray) -> float:
    if not (1 <= i <= spec.num_agents):
        raise ValueError(f"agent index {i} out of range")
    return float(psi_all_local(spec, p)[i - 1])


def grad_psi_blocks(spec: FormationSpec, p: np.ndarray) -> np.ndarray:
    """Gradient of the global potential, as an (N, n) array of blocks.

    Block i is sum over incident edges of (||p_i-p_j||^2 - d_ij^2)(p_i - p_j).
    """
    _, a, b, w, err = _edge_errors(spec, p)
    g = np.zeros((spec.num_agents, spec.dim))
    contrib = err[:, None] * w
    np.add.at(g, a, contrib)
    np.add.at(g, b, -contrib)
    return g


def grad_psi(spec: FormationSpec, p: np.ndarray) -> np.ndarray:
    return grad_psi_blocks(spec, p).reshape(-1)


def lie_derivative_B(spec: FormationSpec, frames: BodyFrames,
                     i: int, k: int, p: np.ndarray) -> float:
    """Lie derivative of psi along the constant frame field B_{i,k};
    equals <grad_{p_i} psi, b_{i,k}> and coincides with the derivative
    of psi_i along the same field."""
    if not (1 <= i <= spec.num_agents and 1 <= k <= spec.dim):
        raise ValueError("agent or direction index out of range")
    g = grad_psi_blocks(spec, p)
    return float(np.dot(g[i - 1], frames.vector(i, k)))


def verify_gradient_bounds(spec: FormationSpec, realization: Framework,
                           samples: int = 10_000, radius: float = 0.1,
                           seed: int = 0, psi_floor: float = 1e-12,
                           c3_threshold: float = 1e-9) -> dict:
    """Sample the ratio ||grad psi||^2 / psi near a target realization.

    Reports the max (c1_hat) and min (c3_hat) of the ratio over perturbed
    points with psi above psi_floor.  Near an infinitesimally rigid target,
    c3_hat stays bounded away from zero.
    """
    psi0 = psi_global(spec, realization.positions)
    if psi0 > 1e-9:
        raise ValueError(f"realization does not satisfy psi=0 (psi={psi0:.3e})")
    rng = np.random.default_rng(seed)
    dim = realization.positions.size
    c1_hat = 0.0
    c3_hat = np.inf
    used = 0
    for _ in range(samples):
        delta = rng.normal(size=dim)
        delta *= radius * rng.random() / np.linalg.norm(delta)
        p = realization.positions + delta
        val = psi_global(spec, p)
        if val <= psi_floor:
            continue
        ratio = float(np.dot(grad_psi(spec, p), grad_psi(spec, p))) / val
        c1_hat = max(c1_hat, ratio)
        c3_hat = min(c3_hat, ratio)
        used += 1
    if used == 0:
        raise ValueError("no sample produced psi above the floor; "
                         "increase radius or samples")
    return {
        "c1_hat": c1_hat,
        "c3_hat": c3_hat,
        "samples_used": used,
        "radius": radius,
        "lower_bound_ok": bool(c3_hat > c3_threshold),
    }


def rigidity_matrix_of_spec(spec: FormationSpec, p: np.ndarray) -> np.ndarray:
    """Rigidity matrix of the spec's graph at p (convenience wrapper)."""
    return rigidity_matrix(Framework(spec.graph, spec.dim, p))
