"""Shared generators and oracle helpers for the test suite."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from enif_lab.graph import CIGraph
from enif_lab.sparse_core import SparseSpd

settings.register_profile(
    "suite", deadline=None, max_examples=25,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("suite")


def random_graph(p: int, n_edges: int, rng: np.random.Generator) -> CIGraph:
    edges = set()
    while len(edges) < min(n_edges, p * (p - 1) // 2):
        i, j = rng.integers(0, p, 2)
        if i != j:
            edges.add((int(min(i, j)), int(max(i, j))))
    return CIGraph(p, edges)


def random_graph_spd(graph: CIGraph, rng: np.random.Generator,
                     scale: float = 0.4) -> tuple[SparseSpd, np.ndarray]:
    """Diagonally dominant symmetric matrix on the graph pattern (hence SPD),
    returned in both sparse and dense form."""
    p = graph.p
    dense = np.zeros((p, p))
    for i, j in graph.edges:
        v = rng.normal() * scale
        dense[i, j] = dense[j, i] = v
    np.fill_diagonal(dense, np.abs(dense).sum(axis=1) + rng.uniform(0.5, 2.0, p))
    return SparseSpd.from_dense(dense, pattern=graph), dense


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
