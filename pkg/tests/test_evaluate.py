import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from enif_lab.evaluate import (gaussian_kld, gaussian_kld_dense, nll_curve,
                               update_summary)
from enif_lab.graph import chain_graph, circular_markov_graph
from enif_lab.simulators import (Ensemble, GaussianOracle, ar1_oracle,
                                 ar1_sample, gain_from_cov, exact_point_update)
from enif_lab.sparse_core import SparseSpd
from enif_lab.transport import fit_affine_kr, unwrap_precision

from conftest import random_graph, random_graph_spd


class TestGaussianKld:
    def test_identical_distributions_give_zero(self):
        oracle = ar1_oracle(7, 0.4)
        rep = gaussian_kld(oracle, oracle.mean, oracle.prec)
        assert abs(rep.total) < 1e-10

    def test_unit_mean_shift_closed_form(self):
        oracle = GaussianOracle(np.zeros(1), np.eye(1))
        rep = gaussian_kld(oracle, np.ones(1), SparseSpd.identity(1))
        assert rep.total == pytest.approx(0.5)
        assert rep.mean_term == pytest.approx(0.5)

    def test_sparse_route_matches_dense_route(self):
        oracle = ar1_oracle(50, 0.7)
        ens = ar1_sample(oracle, 5000, 3)
        krmap = fit_affine_kr(ens, chain_graph(50))
        lam = unwrap_precision(krmap)
        sparse_rep = gaussian_kld(oracle, krmap.mean, lam)
        dense_rep = gaussian_kld_dense(oracle.mean, oracle.cov, krmap.mean,
                                       np.linalg.inv(lam.to_dense()))
        assert abs(sparse_rep.total - dense_rep.total) < 1e-8

    def test_components_sum_to_total(self):
        oracle = ar1_oracle(6, 0.3)
        rep = gaussian_kld(oracle, np.full(6, 0.2), oracle.prec)
        assert rep.total == pytest.approx(
            rep.mean_term + rep.trace_term + rep.logdet_term)
        assert rep.per_variable_average == pytest.approx(rep.total / 6)

    @given(st.integers(min_value=1, max_value=20),
           st.integers(min_value=0, max_value=2**32 - 1))
    def test_non_negative(self, p, seed):
        rng = np.random.default_rng(seed)
        g = random_graph(p, 2 * p, rng)
        q_prec, _ = random_graph_spd(g, rng)
        a = rng.standard_normal((2 * p, p))
        cov_p = a.T @ a / (2 * p) + 0.5 * np.eye(p)
        oracle = GaussianOracle(rng.standard_normal(p), cov_p)
        rep = gaussian_kld(oracle, rng.standard_normal(p), q_prec)
        assert rep.total >= -1e-9

    def test_zero_only_for_identical_parameters(self):
        oracle = ar1_oracle(5, 0.5)
        rep = gaussian_kld(oracle, oracle.mean + 1e-3, oracle.prec)
        assert rep.total > 1e-8


class TestNllCurve:
    def test_single_graph_single_point(self):
        oracle = ar1_oracle(8, 0.5)
        train = ar1_sample(oracle, 60, 1)
        test = ar1_sample(oracle, 60, 2)
        points, argmin = nll_curve(train, test, [chain_graph(8)])
        assert len(points) == 1 and argmin == 0

    def test_train_equals_test_gives_train_curve(self):
        oracle = ar1_oracle(10, 0.6)
        train = ar1_sample(oracle, 80, 3)
        graphs = [circular_markov_graph(10, k) for k in (1, 2, 3)]
        points, _ = nll_curve(train, train, graphs)
        for pt in points:
            assert pt.test_nll == pytest.approx(pt.train_nll)

    def test_train_loss_monotone(self):
        oracle = ar1_oracle(12, 0.7)
        train = ar1_sample(oracle, 100, 5)
        test = ar1_sample(oracle, 100, 6)
        graphs = [circular_markov_graph(12, k) for k in (1, 2, 3, 4, 5)]
        points, _ = nll_curve(train, test, graphs)
        trains = [pt.train_nll for pt in points]
        assert all(a >= b - 1e-9 for a, b in zip(trains, trains[1:]))

    def test_non_nested_rejected(self):
        oracle = ar1_oracle(8, 0.5)
        train = ar1_sample(oracle, 50, 7)
        with pytest.raises(ValueError):
            nll_curve(train, train, [circular_markov_graph(8, 2), chain_graph(8)])


class TestUpdateSummary:
    def test_identity_update(self, rng):
        ens = Ensemble(rng.standard_normal((20, 5)))
        s = update_summary(ens, ens)
        assert np.abs(s["mean_update"]).max() == 0.0
        assert np.allclose(s["variance_ratio"], 1.0)

    def test_exact_update_mean_shift_is_gain_times_mean_innovation(self, rng):
        oracle = ar1_oracle(10, 0.6)
        ens = ar1_sample(oracle, 200, 9)
        g = gain_from_cov(oracle.cov, 9, 1.0)
        draws = rng.standard_normal(200)
        post = exact_point_update(ens, g, 9, 2.0, draws)
        s = update_summary(ens, post)
        innov_mean = np.mean(ens.data[:, 9] + draws - 2.0)
        assert np.abs(s["mean_update"] + g * innov_mean).max() < 1e-12

    def test_collapsed_posterior_ratio_zero(self, rng):
        ens = Ensemble(rng.standard_normal((15, 4)))
        collapsed = Ensemble(np.tile(ens.data.mean(axis=0), (15, 1)))
        s = update_summary(ens, collapsed)
        assert np.allclose(s["variance_ratio"], 0.0)
