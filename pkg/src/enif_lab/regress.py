"""Sparse observation-operator estimation.

The workhorse is forward-stagewise (monotone-lasso style) boosting with 1D
linear base learners: at each iteration the single feature whose 1D fit on
the current residual reduces training mse the most takes a small step. Early
stopping uses a one-term influence-function approximation of leave-one-out
cross-validation, so no refits are needed: the held-out coefficient for
sample i is the full-data coefficient minus IF_i / n, where for a 1D fit on
standardised features IF_i = (r_i - b x_i) x_i.

Rows of the observation matrix are estimated independently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import DimensionMismatch, Underdetermined
from .simulators import Ensemble

ZERO_VARIANCE_TOL = 1e-12


@dataclass(frozen=True)
class SparseRowEstimate:
    """One fitted row: original-scale coefficients keyed by column index, the
    number of boosting steps taken, and the approximate n-fold CV curve
    (entry k is the CV mse after k steps; the final entry is the rejected
    candidate that triggered the stop)."""

    coefficients: dict[int, float]
    iterations_used: int
    cv_curve: np.ndarray
    hit_max_iter: bool
    residual_variance: float

    @property
    def support(self) -> set[int]:
        return set(self.coefficients)


def monotone_lasso_row(X: np.ndarray, y: np.ndarray, step: float = 0.1,
                       max_iter: int | None = None,
                       selection_penalty: bool = True) -> SparseRowEstimate:
    """Boosted sparse regression of one response on the state matrix.

    Features and response are standardised internally; returned coefficients
    are rescaled back to the original scale. Zero-variance features are
    excluded from the candidate set; a (near-)constant response returns an
    empty estimate.

    The CV curve is the influence-function leave-one-out mse of the boosted
    path. Because each step's coordinate is the argmax over p candidates, the
    raw LOO increment is optimistic by the expected best spurious gain, so by
    default each increment is debiased by step*(2-step) * 2 log(p) / n times
    the current residual level; `selection_penalty=False` gives the
    uncorrected curve.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if y.shape != (n,):
        raise DimensionMismatch("response length differs from sample count")
    if n < 3:
        raise ValueError("need at least 3 samples")
    if max_iter is None:
        max_iter = 10 * p

    sy = float(y.std())
    if sy <= ZERO_VARIANCE_TOL:
        return SparseRowEstimate({}, 0, np.zeros(1), False, 0.0)
    sx_all = X.std(axis=0)
    active = np.nonzero(sx_all > ZERO_VARIANCE_TOL)[0]
    if active.size == 0:
        return SparseRowEstimate({}, 0, np.ones(1), False, sy ** 2)
    xs = (X[:, active] - X[:, active].mean(axis=0)) / sx_all[active]
    ys = (y - y.mean()) / sy
    null_gain = 2.0 * np.log(active.size) / n if selection_penalty else 0.0

    beta = np.zeros(active.size)
    r = ys.copy()
    r_cv = ys.copy()
    cum_penalty = 0.0
    cv = [float(np.mean(r_cv ** 2))]
    iters = 0
    hit_max = False
    while True:
        if iters >= max_iter:
            hit_max = True
            break
        b_all = xs.T @ r / n          # 1D coefficients (unit feature variance)
        j = int(np.argmax(b_all ** 2))  # ties resolve to the lowest index
        b = b_all[j]
        xj = xs[:, j]
        infl = (r - b * xj) * xj
        b_loo = b - infl / n
        cand_r_cv = r_cv - step * b_loo * xj
        penalty = step * (2.0 - step) * float(np.mean(r_cv ** 2)) * null_gain
        cand_cv = float(np.mean(cand_r_cv ** 2)) + cum_penalty + penalty
        cv.append(cand_cv)
        if cand_cv >= cv[-2]:
            break
        beta[j] += step * b
        r -= step * b * xj
        r_cv = cand_r_cv
        cum_penalty += penalty
        iters += 1

    nz = np.nonzero(beta)[0]
    coeffs = {int(active[j]): float(sy * beta[j] / sx_all[active[j]]) for j in nz}
    resid_var = float(sy ** 2 * np.mean(r ** 2))
    return SparseRowEstimate(coeffs, iters, np.array(cv), hit_max, resid_var)


def lls_row(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Ordinary least squares of one response on centred states (dense row)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if y.shape != (n,):
        raise DimensionMismatch("response length differs from sample count")
    if n <= p:
        raise Underdetermined(f"need n > p for a dense row, got n={n}, p={p}")
    xc = X - X.mean(axis=0)
    yc = y - y.mean()
    try:
        cf = scipy.linalg.cho_factor(xc.T @ xc)
    except scipy.linalg.LinAlgError as exc:
        raise Underdetermined("rank-deficient design") from exc
    return scipy.linalg.cho_solve(cf, xc.T @ yc)


@dataclass(frozen=True)
class HEstimate:
    """Stacked sparse observation matrix with per-response diagnostics."""

    matrix: sp.csr_matrix
    residual_variances: np.ndarray
    rows: tuple[SparseRowEstimate, ...] | None = None

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def support_pattern(self) -> list[np.ndarray]:
        m = self.matrix.tocsr()
        return [m.indices[m.indptr[k]:m.indptr[k + 1]].copy()
                for k in range(m.shape[0])]


def estimate_H(X: Ensemble, Y: np.ndarray, method: str = "monotone_lasso",
               known=None, step: float = 0.1,
               max_iter: int | None = None) -> HEstimate:
    """Row-by-row estimation of the m-by-p observation matrix.

    method 'known' returns the supplied matrix verbatim; 'lls' fits dense
    ordinary-least-squares rows; 'monotone_lasso' fits sparse boosted rows.
    Residual variances (per response, over the ensemble) are reported for all
    methods — they feed the residual-precision model of the update step.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if Y.shape[0] != X.n:
        raise DimensionMismatch("response rows differ from ensemble members")
    m = Y.shape[1]
    p = X.p
    row_estimates: tuple[SparseRowEstimate, ...] | None = None

    if method == "known":
        if known is None:
            raise ValueError("method 'known' requires the matrix")
        mat = sp.csr_matrix(known)
        if mat.shape != (m, p):
            raise DimensionMismatch(f"known matrix must be {(m, p)}, "
                                    f"got {mat.shape}")
    elif method == "lls":
        dense = np.zeros((m, p))
        for k in range(m):
            dense[k] = lls_row(X.data, Y[:, k])
        mat = sp.csr_matrix(dense)
    elif method == "monotone_lasso":
        ests = [monotone_lasso_row(X.data, Y[:, k], step=step, max_iter=max_iter)
                for k in range(m)]
        row_estimates = tuple(ests)
        rows, cols, vals = [], [], []
        for k, est in enumerate(ests):
            for j, v in est.coefficients.items():
                rows.append(k)
                cols.append(j)
                vals.append(v)
        mat = sp.csr_matrix((vals, (rows, cols)), shape=(m, p))
    else:
        raise ValueError(f"unknown method {method!r}")

    fitted = (mat @ X.data.T).T if m else np.zeros((X.n, 0))
    resid_var = np.var(Y - fitted, axis=0) if m else np.zeros(0)
    return HEstimate(mat, resid_var, row_estimates)
