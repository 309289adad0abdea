"""Graphs, frameworks, the edge map and its derivative, and a numerical
infinitesimal-rigidity test.

A framework is a graph together with agent positions in R^n.  The edge map
collects squared inter-agent distances over the edges; its derivative is the
rigidity matrix.  A framework is reported infinitesimally rigid when the
rigidity matrix attains the maximal rank compatible with the affine span of
the configuration.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Graph",
    "Framework",
    "RankReport",
    "edge_map",
    "rigidity_matrix",
    "numerical_rank",
    "affine_span_dim",
    "is_infinitesimally_rigid",
    "DEFAULT_RANK_TOL",
]

DEFAULT_RANK_TOL = 1e-9


def _canonical_edges(edges) -> tuple[tuple[int, int], ...]:
    out = []
    for e in edges:
        i, j = int(e[0]), int(e[1])
        if i == j:
            raise ValueError(f"self-loop edge {{{i},{j}}} is not allowed")
        out.append((min(i, j), max(i, j)))
    out.sort()
    for a, b in zip(out, out[1:]):
        if a == b:
            raise ValueError(f"duplicate edge {{{a[0]},{a[1]}}}")
    return tuple(out)


@dataclass(frozen=True)
class Graph:
    """Undirected graph on vertices 1..num_vertices with a canonical
    (lexicographically sorted) edge order."""

    num_vertices: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.num_vertices < 1:
            raise ValueError("num_vertices must be positive")
        object.__setattr__(self, "edges", _canonical_edges(self.edges))
        if not self.edges:
            raise ValueError("edge list must be nonempty")
        for i, j in self.edges:
            if not (1 <= i <= self.num_vertices and 1 <= j <= self.num_vertices):
                raise ValueError(f"edge {{{i},{j}}} out of range 1..{self.num_vertices}")

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def edge_index(self, i: int, j: int) -> int:
        """Position of edge {i,j} in the canonical order."""
        key = (min(i, j), max(i, j))
        try:
            return self.edges.index(key)
        except ValueError:
            raise KeyError(f"{{{i},{j}}} is not an edge") from None

    def neighbors(self, i: int) -> tuple[int, ...]:
        out = []
        for a, b in self.edges:
            if a == i:
                out.append(b)
            elif b == i:
                out.append(a)
        return tuple(out)

    @staticmethod
    def complete(num_vertices: int) -> "Graph":
        edges = [(i, j) for i in range(1, num_vertices + 1)
                 for j in range(i + 1, num_vertices + 1)]
        return Graph(num_vertices, tuple(edges))

    def without_edge(self, i: int, j: int) -> "Graph":
        key = (min(i, j), max(i, j))
        edges = tuple(e for e in self.edges if e != key)
        return Graph(self.num_vertices, edges)

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """0-based endpoint arrays (a, b) with a < b, canonical order."""
        a = np.array([i - 1 for i, _ in self.edges], dtype=np.int64)
        b = np.array([j - 1 for _, j in self.edges], dtype=np.int64)
        return a, b


@dataclass(frozen=True)
class Framework:
    """A graph with positions p = (p_1,...,p_N) in R^{nN}.

    Coincident points are permitted.
    """

    graph: Graph
    dim: int
    positions: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        p = np.asarray(self.positions, dtype=float).reshape(-1)
        if p.size != self.dim * self.graph.num_vertices:
            raise ValueError(
                f"positions have length {p.size}, expected "
                f"{self.dim * self.graph.num_vertices}")
        p = p.copy()
        p.flags.writeable = False
        object.__setattr__(self, "positions", p)

    @property
    def num_vertices(self) -> int:
        return self.graph.num_vertices

    def points(self) -> np.ndarray:
        """Positions as an (N, n) array."""
        return self.positions.reshape(self.num_vertices, self.dim)


@dataclass(frozen=True)
class RankReport:
    rank_g: int
    affine_span_dim: int
    required_rank: int
    tolerance: float
    is_inf_rigid: bool

    def to_dict(self) -> dict:
        return {
            "rank_g": self.rank_g,
            "affine_span_dim": self.affine_span_dim,
            "required_rank": self.required_rank,
            "tolerance": self.tolerance,
            "is_inf_rigid": self.is_inf_rigid,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def edge_map(fw: Framework) -> np.ndarray:
    """Squared distances ||p_j - p_i||^2 per edge, canonical order."""
    pts = fw.points()
    a, b = fw.graph.edge_arrays()
    diff = pts[a] - pts[b]
    return np.einsum("ed,ed->e", diff, diff)


def rigidity_matrix(fw: Framework) -> np.ndarray:
    """Derivative of the edge map at the framework's positions.

    Row for edge {i,j}: 2(p_i - p_j)^T in block i, 2(p_j - p_i)^T in
    block j, zeros elsewhere.
    """
    pts = fw.points()
    n = fw.dim
    a, b = fw.graph.edge_arrays()
    mat = np.zeros((fw.graph.num_edges, n * fw.num_vertices))
    diff = 2.0 * (pts[a] - pts[b])
    for e in range(len(a)):
        mat[e, a[e] * n:(a[e] + 1) * n] = diff[e]
        mat[e, b[e] * n:(b[e] + 1) * n] = -diff[e]
    return mat


def numerical_rank(mat: np.ndarray, rel_tol: float = DEFAULT_RANK_TOL) -> int:
    """Number of singular values above rel_tol * sigma_max (0 for the zero
    matrix)."""
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    mat = np.asarray(mat, dtype=float)
    if mat.size == 0:
        return 0
    try:
        sigma = np.linalg.svd(mat, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(f"SVD failed on {mat.shape} matrix: {exc}") from exc
    if sigma.size == 0 or sigma[0] == 0.0:
        return 0
    return int(np.count_nonzero(sigma > rel_tol * sigma[0]))


def affine_span_dim(points: np.ndarray, rel_tol: float = DEFAULT_RANK_TOL) -> int:
    """Dimension of the affine span of the rows of an (N, n) point array."""
    pts = np.asarray(points, dtype=float)
    centered = pts - pts.mean(axis=0)
    return numerical_rank(centered, rel_tol)


def is_infinitesimally_rigid(fw: Framework,
                             rel_tol: float = DEFAULT_RANK_TOL) -> RankReport:
    """Rank test for infinitesimal rigidity.

    The required rank is nN minus the dimension of the congruence orbit,
    n(n+1)/2 - (n-k)(n-k-1)/2, where k is the affine span dimension of the
    configuration.  This handles non-spanning configurations that the naive
    nN - n(n+1)/2 shortcut misclassifies.
    """
    n = fw.dim
    N = fw.num_vertices
    k = affine_span_dim(fw.points(), rel_tol)
    orbit_dim = n * (n + 1) // 2 - (n - k) * (n - k - 1) // 2
    required = n * N - orbit_dim
    rank_g = numerical_rank(rigidity_matrix(fw), rel_tol)
    return RankReport(
        rank_g=rank_g,
        affine_span_dim=k,
        required_rank=required,
        tolerance=rel_tol,
        is_inf_rigid=(rank_g == required),
    )
