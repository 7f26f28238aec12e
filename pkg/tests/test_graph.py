import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from enif_lab.errors import OrderTooLarge, TooFewStates
from enif_lab.graph import (CIGraph, chain_graph, circular_markov_graph,
                            complete_graph, empty_graph, graph_from_sparsity,
                            lattice_graph, lorenz96_stencil_graph)
from enif_lab.meshes import structured_rectangle
from enif_lab.simulators import (ar1_oracle, fem_heat_assemble,
                                 heat_smoothing_precision)
from enif_lab.sparse_core import SparseSpd


class TestChain:
    def test_single_vertex(self):
        assert chain_graph(1).edges == frozenset()

    def test_p4(self):
        assert chain_graph(4).edges == {(0, 1), (1, 2), (2, 3)}

    def test_long_chain_degrees(self):
        g = chain_graph(100)
        assert g.n_edges == 99
        assert g.degrees().max() == 2


class TestCircular:
    def test_order_one_ring(self):
        g = circular_markov_graph(40, 1)
        assert g.n_edges == 40
        assert set(g.degrees()) == {2}

    def test_complete_when_order_reaches_half(self):
        g = circular_markov_graph(5, 2)
        assert g.edges == complete_graph(5).edges

    def test_degree_regular(self):
        g = circular_markov_graph(40, 7)
        # direct enumeration oracle
        expected = set()
        for j in range(40):
            for k in range(1, 8):
                expected.add(tuple(sorted((j, (j + k) % 40))))
        assert g.edges == frozenset(expected)
        assert set(g.degrees()) == {14}

    def test_order_too_large(self):
        with pytest.raises(OrderTooLarge):
            circular_markov_graph(40, 20)

    def test_edges_increase_with_order_until_complete(self):
        counts = [circular_markov_graph(11, k).n_edges for k in range(1, 6)]
        assert all(a < b for a, b in zip(counts, counts[1:]))
        assert counts[-1] == complete_graph(11).n_edges


def band_offsets(stencil):
    return sorted({a - b for a in stencil for b in stencil if a != b})


class TestLorenzStencil:
    def test_euler_degree(self):
        g = lorenz96_stencil_graph(40, "euler")
        # pairwise differences of the one-step stencil {-2,-1,0,1}
        assert band_offsets((-2, -1, 0, 1)) == [-3, -2, -1, 1, 2, 3]
        assert set(g.degrees()) == {6}

    def test_rk4_degree(self):
        g = lorenz96_stencil_graph(40, "rk4")
        assert set(g.degrees()) == {18}

    def test_euler_subset_of_rk4(self):
        euler = lorenz96_stencil_graph(40, "euler")
        rk4 = lorenz96_stencil_graph(40, "rk4")
        assert euler.is_subgraph_of(rk4)

    def test_too_few_states(self):
        with pytest.raises(TooFewStates):
            lorenz96_stencil_graph(12, "rk4")


class TestLattice:
    def test_single_cell(self):
        assert lattice_graph(1, 1).n_edges == 0

    def test_four_connected_count(self):
        # 2*r*c - r - c
        assert lattice_graph(3, 3).n_edges == 12

    def test_eight_connected_count(self):
        # 4*r*c - 3*r - 3*c + 2
        assert lattice_graph(10, 10, "8-connected").n_edges == 342


class TestFromSparsity:
    def test_diagonal_matrix_gives_empty_graph(self):
        g = graph_from_sparsity(SparseSpd.diagonal(np.ones(4)))
        assert g.n_edges == 0

    def test_ar1_precision_gives_chain(self):
        oracle = ar1_oracle(6, 0.5)
        assert graph_from_sparsity(oracle.prec).edges == chain_graph(6).edges

    def test_time_block_precision_is_temporal_chain_of_blocks(self):
        mesh = structured_rectangle(3, 3)
        system = fem_heat_assemble(mesh, alpha=0.05, sigma=1.0, dt=0.05)
        joint = heat_smoothing_precision(system, 3)
        g = graph_from_sparsity(joint)
        p_space = system.p
        block_pairs = {(min(i // p_space, j // p_space),
                        max(i // p_space, j // p_space)) for i, j in g.edges}
        cross = {(a, b) for a, b in block_pairs if a != b}
        assert cross == {(0, 1), (1, 2)}


class TestInvariants:
    @given(st.integers(min_value=2, max_value=30),
           st.integers(min_value=0, max_value=2**32 - 1))
    def test_relabelling_equivariance(self, p, seed):
        rng = np.random.default_rng(seed)
        edges = {(int(min(i, j)), int(max(i, j)))
                 for i, j in rng.integers(0, p, (2 * p, 2)) if i != j}
        g = CIGraph(p, edges)
        order = rng.permutation(p)
        relabelled = g.relabelled(order)
        assert relabelled.n_edges == g.n_edges
        inv = np.empty(p, dtype=int)
        inv[order] = np.arange(p)
        assert relabelled.edges == {(min(inv[i], inv[j]), max(inv[i], inv[j]))
                                    for i, j in g.edges}

    def test_no_self_loops(self):
        with pytest.raises(ValueError):
            CIGraph(3, {(1, 1)})

    def test_empty_graph(self):
        assert empty_graph(5).n_edges == 0
