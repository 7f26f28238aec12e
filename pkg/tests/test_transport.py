import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from enif_lab.errors import DimensionMismatch, UnderdeterminedRow, ZeroResidual
from enif_lab.evaluate import gaussian_kld
from enif_lab.graph import chain_graph, complete_graph, empty_graph
from enif_lab.simulators import Ensemble, ar1_oracle, ar1_sample
from enif_lab.sparse_core import (Permutation, SparseSpd, cholesky, factor_nnz,
                                  fill_reducing_order, identity_permutation,
                                  symbolic_cholesky)
from enif_lab.transport import fit_affine_kr, gaussian_nll, unwrap_precision

from conftest import random_graph


class TestFitAffine:
    def test_independent_gaussians_give_diagonal_map(self, rng):
        data = rng.standard_normal((20_000, 6)) * np.array([1.0, 2, 0.5, 1, 3, 1])
        ens = Ensemble(data)
        krmap = fit_affine_kr(ens, empty_graph(6))
        assert krmap.nnz == 6      # pure diagonal
        lam = unwrap_precision(krmap).to_dense()
        sd = data.std(axis=0)
        assert np.abs(np.diag(lam) - 1.0 / sd ** 2).max() < 0.05
        assert np.abs(lam - np.diag(np.diag(lam))).max() == 0.0

    def test_ar1_fit_matches_closed_form_precision(self):
        oracle = ar1_oracle(8, 0.5)
        ens = ar1_sample(oracle, 100_000, 3)
        lam = unwrap_precision(fit_affine_kr(ens, chain_graph(8))).to_dense()
        assert np.abs(lam - oracle.prec.to_dense()).max() < 0.02

    def test_complete_graph_matches_sample_covariance(self, rng):
        n, p = 400, 20
        data = rng.standard_normal((n, p)) @ rng.standard_normal((p, p))
        ens = Ensemble(data)
        lam = unwrap_precision(fit_affine_kr(ens, complete_graph(p))).to_dense()
        assert np.abs(np.linalg.inv(lam) - ens.sample_cov()).max() < 1e-6

    def test_underdetermined_row_detected(self, rng):
        ens = Ensemble(rng.standard_normal((5, 10)))
        with pytest.raises(UnderdeterminedRow):
            fit_affine_kr(ens, complete_graph(10))

    def test_constant_variable_detected(self, rng):
        data = rng.standard_normal((50, 4))
        data[:, 2] = 7.0
        with pytest.raises(ZeroResidual):
            fit_affine_kr(Ensemble(data), empty_graph(4))

    def test_dimension_mismatch(self, rng):
        ens = Ensemble(rng.standard_normal((10, 4)))
        with pytest.raises(DimensionMismatch):
            fit_affine_kr(ens, chain_graph(5))

    def test_factor_nnz_equals_ordinary_factor_nnz(self, rng):
        g = random_graph(15, 30, rng)
        ens = Ensemble(rng.standard_normal((200, 15)))
        krmap = fit_affine_kr(ens, g)
        star = krmap.perm_star
        assert krmap.nnz == factor_nnz(symbolic_cholesky(g, star))


class TestUnwrap:
    def test_identity_map_unwraps_to_identity(self, rng):
        ens = Ensemble(rng.standard_normal((5000, 3)))
        krmap = fit_affine_kr(ens, empty_graph(3))
        lam = unwrap_precision(krmap)
        assert np.abs(lam.to_dense() - np.eye(3)).max() < 0.1

    def test_chain_pattern_stays_tridiagonal(self, rng):
        ens = Ensemble(rng.standard_normal((500, 12)))
        krmap = fit_affine_kr(ens, chain_graph(12))
        lam = unwrap_precision(krmap)
        assert np.abs(lam.rows - lam.cols).max() <= 1

    def test_ordering_invariance_without_fill(self):
        oracle = ar1_oracle(10, 0.6)
        ens = ar1_sample(oracle, 10_000, 5)
        g = chain_graph(10)
        nat = unwrap_precision(fit_affine_kr(ens, g, identity_permutation(10)))
        rev = unwrap_precision(
            fit_affine_kr(ens, g, Permutation(np.arange(10)[::-1].copy(),
                                              kind="fill-reducing")))
        assert np.abs(nat.to_dense() - rev.to_dense()).max() < 1e-8

    def test_unwrapped_precision_is_spd(self, rng):
        for k in range(5):
            local = np.random.default_rng(k)
            g = random_graph(12, 25, local)
            ens = Ensemble(local.standard_normal((300, 12)))
            lam = unwrap_precision(fit_affine_kr(ens, g))
            factor = cholesky(lam)
            assert np.isfinite(factor.logdet())


class TestGaussianNll:
    def test_standard_normal_at_origin(self):
        ens = Ensemble(np.zeros((4, 1)))
        nll = gaussian_nll(ens, SparseSpd.identity(1), np.zeros(1))
        assert nll == pytest.approx(0.5 * np.log(2 * np.pi))

    def test_train_loss_monotone_in_graph_size(self, rng):
        oracle = ar1_oracle(10, 0.7)
        train = ar1_sample(oracle, 80, 9)
        losses = []
        graphs = [empty_graph(10), chain_graph(10), complete_graph(10)]
        for g in graphs:
            krmap = fit_affine_kr(train, g)
            losses.append(gaussian_nll(train, unwrap_precision(krmap),
                                       krmap.mean))
        assert losses[0] >= losses[1] - 1e-9
        assert losses[1] >= losses[2] - 1e-9

    def test_matches_entropy_for_oracle_model(self):
        oracle = ar1_oracle(6, 0.5)
        ens = ar1_sample(oracle, 10_000, 11)
        nll = gaussian_nll(ens, oracle.prec, oracle.mean)
        entropy = 0.5 * np.linalg.slogdet(
            2 * np.pi * np.e * oracle.cov)[1]
        assert abs(nll - entropy) < 0.02 * abs(entropy)


class TestConsistency:
    def test_kld_to_oracle_decreases_with_ensemble_size(self):
        oracle = ar1_oracle(12, 0.6)
        g = chain_graph(12)
        medians = []
        for n in (50, 500, 5000):
            klds = []
            for seed in range(20):
                ens = ar1_sample(oracle, n, (n, seed))
                krmap = fit_affine_kr(ens, g)
                lam = unwrap_precision(krmap)
                klds.append(gaussian_kld(oracle, krmap.mean, lam).total)
            medians.append(np.median(klds))
        assert medians[0] > medians[1] > medians[2]


class TestPropertySuites:
    @given(st.integers(min_value=3, max_value=16),
           st.integers(min_value=0, max_value=2**32 - 1))
    def test_fit_produces_spd_precision(self, p, seed):
        local = np.random.default_rng(seed)
        g = random_graph(p, 2 * p, local)
        ens = Ensemble(local.standard_normal((4 * p + 20, p)))
        lam = unwrap_precision(fit_affine_kr(ens, g))
        factor = cholesky(lam)
        assert np.isfinite(factor.logdet())

    @given(st.integers(min_value=2, max_value=12),
           st.integers(min_value=0, max_value=2**32 - 1))
    def test_map_pattern_within_fill_closure(self, p, seed):
        local = np.random.default_rng(seed)
        g = random_graph(p, 2 * p, local)
        ens = Ensemble(local.standard_normal((5 * p + 10, p)))
        krmap = fit_affine_kr(ens, g)
        lam = unwrap_precision(krmap)
        star = krmap.perm_star
        cols = symbolic_cholesky(g, star)
        inv = star.inverse_order
        closure = {(int(i), int(j)) for i, j in g.edges}
        for jcol, rows_ in enumerate(cols):
            for r in rows_:
                a, b = star.order[jcol], star.order[r]
                closure.add((min(a, b), max(a, b)))
        for i, j in zip(lam.rows, lam.cols):
            if i != j:
                assert (min(i, j), max(i, j)) in closure
