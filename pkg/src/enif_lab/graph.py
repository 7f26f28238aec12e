"""Conditional-independence graphs over state indices.

A `CIGraph` is an undirected simple graph on vertices ``0..p-1``. Edges encode
allowed off-diagonal nonzeros of a precision matrix: absence of an edge means
the two variables are conditionally independent given the rest. Builders cover
the analytical models used by the experiments (auto-regressive chains, circular
Markov bands, one-step integrator stencils, lattices).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import OrderTooLarge, TooFewStates

Edge = tuple[int, int]


def _normalise_edges(p: int, edges) -> frozenset[Edge]:
    out = set()
    for i, j in edges:
        i, j = int(i), int(j)
        if i == j:
            raise ValueError(f"self-loop at vertex {i}")
        if not (0 <= i < p and 0 <= j < p):
            raise ValueError(f"edge ({i},{j}) outside vertex range 0..{p - 1}")
        out.add((min(i, j), max(i, j)))
    return frozenset(out)


@dataclass(frozen=True)
class CIGraph:
    """Undirected conditional-independence graph on ``p`` vertices."""

    p: int
    edges: frozenset[Edge] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.p < 0:
            raise ValueError("vertex count must be non-negative")
        object.__setattr__(self, "edges", _normalise_edges(self.p, self.edges))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> list[list[int]]:
        """Sorted neighbour lists, one per vertex."""
        adj: list[list[int]] = [[] for _ in range(self.p)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        for a in adj:
            a.sort()
        return adj

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.p, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def is_subgraph_of(self, other: "CIGraph") -> bool:
        return self.p == other.p and self.edges <= other.edges

    def relabelled(self, order: np.ndarray) -> "CIGraph":
        """Graph under new labels where new vertex i is old vertex order[i]."""
        inv = np.empty(self.p, dtype=int)
        inv[np.asarray(order)] = np.arange(self.p)
        return CIGraph(self.p, {(inv[i], inv[j]) for i, j in self.edges})


def empty_graph(p: int) -> CIGraph:
    return CIGraph(p, frozenset())


def complete_graph(p: int) -> CIGraph:
    return CIGraph(p, {(i, j) for i in range(p) for j in range(i + 1, p)})


def chain_graph(p: int) -> CIGraph:
    """First-order chain: edges between consecutive indices only."""
    if p < 1:
        raise ValueError("p must be >= 1")
    return CIGraph(p, {(t, t + 1) for t in range(p - 1)})


def circular_markov_graph(p: int, order: int) -> CIGraph:
    """Circular band graph: vertex j adjacent to j+-1, ..., j+-order (mod p).

    Used as the parsimonious filtering approximation whose order is swept in
    the chaotic-dynamics experiment; ``order`` close to p/2 approaches the
    complete graph.
    """
    if p < 3:
        raise ValueError("p must be >= 3 for a circular graph")
    if order < 1 or order >= p / 2:
        raise OrderTooLarge(f"order must satisfy 1 <= k < p/2, got k={order}, p={p}")
    edges = set()
    for j in range(p):
        for k in range(1, order + 1):
            edges.add((min(j, (j + k) % p), max(j, (j + k) % p)))
    return CIGraph(p, edges)


# One-step dependence stencils of the two integrators: the state at index j
# after one step is a function of the states at j+offset for these offsets.
_EULER_STENCIL = (-2, -1, 0, 1)
_RK4_STENCIL = (-6, -5, -4, -3, -2, -1, 0, 1, 2, 3)


def lorenz96_stencil_graph(m: int, scheme: str = "rk4") -> CIGraph:
    """Undirected dependence pattern induced by one integrator step.

    Two state indices are connected when they co-occur in some output's
    stencil: the edge offsets are all pairwise differences of the stencil,
    which for the single-step map gives bands j+-1..j+-3 (euler) and
    j+-1..j+-9 (rk4).
    """
    if scheme not in ("euler", "rk4"):
        raise ValueError(f"unknown scheme {scheme!r}")
    stencil = _EULER_STENCIL if scheme == "euler" else _RK4_STENCIL
    min_m = 4 if scheme == "euler" else 13
    if m < min_m:
        raise TooFewStates(f"{scheme} stencil needs m >= {min_m}, got {m}")
    offsets = sorted({a - b for a in stencil for b in stencil if a != b})
    edges = set()
    for j in range(m):
        for off in offsets:
            k = (j + off) % m
            if k != j:
                edges.add((min(j, k), max(j, k)))
    return CIGraph(m, edges)


def lattice_graph(rows: int, cols: int, neighborhood: str = "4-connected") -> CIGraph:
    """Regular 2D lattice in row-major vertex order."""
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    if neighborhood not in ("4-connected", "8-connected"):
        raise ValueError(f"unknown neighborhood {neighborhood!r}")
    diag = neighborhood == "8-connected"
    edges = set()

    def idx(r, c):
        return r * cols + c

    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                edges.add((idx(r, c), idx(r, c + 1)))
            if r + 1 < rows:
                edges.add((idx(r, c), idx(r + 1, c)))
            if diag and r + 1 < rows:
                if c + 1 < cols:
                    edges.add((idx(r, c), idx(r + 1, c + 1)))
                if c - 1 >= 0:
                    edges.add((min(idx(r, c), idx(r + 1, c - 1)),
                               max(idx(r, c), idx(r + 1, c - 1))))
    return CIGraph(rows * cols, edges)


def graph_from_sparsity(m) -> CIGraph:
    """Edge for every stored off-diagonal entry of a symmetric sparse matrix
    with nonzero value."""
    edges = set()
    for i, j, v in zip(m.rows, m.cols, m.values):
        if i != j and v != 0.0:
            edges.add((min(int(i), int(j)), max(int(i), int(j))))
    return CIGraph(m.dim, edges)
