import numpy as np
import pytest

from enif_lab.errors import Underdetermined
from enif_lab.regress import (HEstimate, estimate_H, lls_row,
                              monotone_lasso_row)
from enif_lab.simulators import Ensemble


class TestMonotoneLassoRow:
    def test_zero_response_empty_support(self, rng):
        X = rng.standard_normal((50, 8))
        est = monotone_lasso_row(X, np.zeros(50))
        assert est.coefficients == {}
        assert est.iterations_used == 0

    def test_noiseless_single_feature_recovery(self, rng):
        X = rng.standard_normal((200, 20))
        y = X[:, 5].copy()
        est = monotone_lasso_row(X, y)
        assert set(est.coefficients) == {5}
        assert est.coefficients[5] == pytest.approx(1.0, rel=0.05)

    def test_training_mse_monotone_along_path(self, rng):
        # replay the boosting path and check the fitted training residual
        # shrinks at every accepted step
        X = rng.standard_normal((100, 10))
        y = X[:, 1] - 0.5 * X[:, 7] + 0.3 * rng.standard_normal(100)
        xs = (X - X.mean(0)) / X.std(0)
        ys = (y - y.mean()) / y.std()
        r = ys.copy()
        mses = [np.mean(r**2)]
        for _ in range(60):
            b = xs.T @ r / len(ys)
            j = int(np.argmax(b**2))
            r = r - 0.1 * b[j] * xs[:, j]
            mses.append(np.mean(r**2))
        assert all(a >= b for a, b in zip(mses, mses[1:]))

    def test_stopping_rule_honoured(self, rng):
        X = rng.standard_normal((80, 15))
        y = X[:, 2] + rng.standard_normal(80)
        est = monotone_lasso_row(X, y)
        k = est.iterations_used
        assert len(est.support) <= k or k == 0
        if not est.hit_max_iter:
            assert est.cv_curve[k] <= est.cv_curve[k + 1]

    def test_scale_equivariance(self, rng):
        X = rng.standard_normal((150, 12))
        y = X[:, 3] + 0.1 * rng.standard_normal(150)
        est1 = monotone_lasso_row(X, y)
        X2 = X.copy()
        X2[:, 3] *= 10.0
        est2 = monotone_lasso_row(X2, y)
        assert est1.coefficients[3] == pytest.approx(10.0 * est2.coefficients[3],
                                                     rel=1e-9)

    def test_zero_variance_feature_excluded(self, rng):
        X = rng.standard_normal((60, 5))
        X[:, 0] = 3.0
        y = X[:, 2] + 0.05 * rng.standard_normal(60)
        est = monotone_lasso_row(X, y)
        assert 0 not in est.coefficients

    def test_max_iter_reported_not_fatal(self, rng):
        X = rng.standard_normal((100, 4))
        y = X[:, 0].copy()
        est = monotone_lasso_row(X, y, max_iter=3)
        assert est.hit_max_iter
        assert est.iterations_used == 3


class TestLlsRow:
    def test_orthonormal_design_exact(self):
        X = np.eye(6)[:, :3] * 2.0
        X = np.vstack([X, -X])
        beta = np.array([1.0, -2.0, 0.5])
        y = X @ beta
        assert np.abs(lls_row(X, y) - beta).max() < 1e-12

    def test_sampling_distribution(self, rng):
        from enif_lab.simulators import ar1_oracle, ar1_sample
        oracle = ar1_oracle(10, 0.5)
        X = ar1_sample(oracle, 1000, 3).data
        beta = rng.standard_normal(10)
        sigma = 0.5
        y = X @ beta + sigma * rng.standard_normal(1000)
        bhat = lls_row(X, y)
        xc = X - X.mean(0)
        se = sigma * np.sqrt(np.diag(np.linalg.inv(xc.T @ xc)))
        assert np.all(np.abs(bhat - beta) < 3.5 * se)

    def test_square_design_rejected(self, rng):
        with pytest.raises(Underdetermined):
            lls_row(rng.standard_normal((10, 10)), np.zeros(10))


class TestEstimateH:
    def test_identity_observation_pattern(self, rng):
        ens = Ensemble(rng.standard_normal((500, 25)))
        est = estimate_H(ens, ens.data.copy(), "monotone_lasso")
        pattern = est.support_pattern()
        for k in range(25):
            assert k in set(pattern[k])
            assert len(set(pattern[k]) - {k}) <= 2

    def test_known_returned_verbatim(self, rng):
        import scipy.sparse as sp
        ens = Ensemble(rng.standard_normal((30, 6)))
        h = sp.csr_matrix((np.ones(2), ([0, 1], [2, 4])), shape=(2, 6))
        y = (h @ ens.data.T).T
        est = estimate_H(ens, y, "known", known=h)
        assert (est.matrix != h).nnz == 0
        assert np.abs(est.residual_variances).max() < 1e-20

    def test_empty_observation_block(self, rng):
        ens = Ensemble(rng.standard_normal((10, 4)))
        est = estimate_H(ens, np.zeros((10, 0)), "monotone_lasso")
        assert est.matrix.shape == (0, 4)
        assert est.residual_variances.size == 0

    def test_lls_method_dense_rows(self, rng):
        ens = Ensemble(rng.standard_normal((200, 8)))
        h_true = rng.standard_normal((3, 8))
        y = ens.data @ h_true.T + 0.01 * rng.standard_normal((200, 3))
        est = estimate_H(ens, y, "lls")
        assert np.abs(est.matrix.toarray() - h_true).max() < 0.05

    def test_residual_variance_reported(self, rng):
        ens = Ensemble(rng.standard_normal((400, 10)))
        y = ens.data[:, [4]] + 0.2 * rng.standard_normal((400, 1))
        est = estimate_H(ens, y, "monotone_lasso")
        assert est.residual_variances[0] == pytest.approx(0.04, rel=0.5)
