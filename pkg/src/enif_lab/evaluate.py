"""Divergence and summary metrics for fitted Gaussian models.

The divergence of a fitted model Q from the truth P is evaluated in the
orientation D(P || Q) (truth first), in the standard non-negative form
0.5 * [tr(Lam_Q Sig_P) + (mu_Q - mu_P)^T Lam_Q (mu_Q - mu_P) - p
       + log|Sig_Q| - log|Sig_P|];
the sparse path takes log|Sig_Q| from the factored fitted precision, while
the dense helper evaluates the same quantity from covariances only and serves
as the independent cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NotPositiveDefinite
from .graph import CIGraph
from .simulators import Ensemble, GaussianOracle
from .sparse_core import SparseSpd, cholesky
from .transport import fit_affine_kr, gaussian_nll, unwrap_precision


@dataclass(frozen=True)
class KldReport:
    """Divergence in nats with its three parts (mean, trace, log-determinant);
    `total = mean_term + trace_term + logdet_term`, non-negative up to
    roundoff, zero only for identical parameters."""

    total: float
    per_variable_average: float
    mean_term: float
    trace_term: float
    logdet_term: float


def gaussian_kld(p0: GaussianOracle, q_mean: np.ndarray,
                 q_prec: SparseSpd) -> KldReport:
    """D(P0 || Q) for a sparse-precision model Q against a dense-covariance
    truth P0."""
    p = p0.p
    if q_prec.dim != p or np.asarray(q_mean).size != p:
        raise DimensionMismatch("model dimension differs from truth")
    factor = cholesky(q_prec)           # raises NotPositiveDefinite if not SPD
    delta = np.asarray(q_mean, dtype=float) - p0.mean

    off = q_prec.rows != q_prec.cols
    tr = float(np.sum(q_prec.values * p0.cov[q_prec.rows, q_prec.cols])
               + np.sum(q_prec.values[off] * p0.cov[q_prec.rows[off],
                                                    q_prec.cols[off]]))
    quad = float(delta @ q_prec.matvec(delta))
    sign, logdet_p = np.linalg.slogdet(p0.cov)
    if sign <= 0:
        raise NotPositiveDefinite("truth covariance is not positive definite")
    logdet_q_cov = -factor.logdet()

    mean_term = 0.5 * quad
    trace_term = 0.5 * (tr - p)
    logdet_term = 0.5 * (logdet_q_cov - logdet_p)
    total = mean_term + trace_term + logdet_term
    return KldReport(total, total / p, mean_term, trace_term, logdet_term)


def gaussian_kld_dense(mean_p: np.ndarray, cov_p: np.ndarray,
                       mean_q: np.ndarray, cov_q: np.ndarray) -> KldReport:
    """Same divergence from dense parameters on both sides; the independent
    route used for moment-form models and for cross-checking the sparse path."""
    mean_p = np.asarray(mean_p, dtype=float)
    mean_q = np.asarray(mean_q, dtype=float)
    p = mean_p.size
    if cov_p.shape != (p, p) or cov_q.shape != (p, p) or mean_q.size != p:
        raise DimensionMismatch("inconsistent shapes")
    sign_q, logdet_q = np.linalg.slogdet(cov_q)
    sign_p, logdet_p = np.linalg.slogdet(cov_p)
    if sign_p <= 0 or sign_q <= 0:
        raise NotPositiveDefinite("covariance with non-positive determinant")
    try:
        cq = np.linalg.cholesky(cov_q)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("model covariance failed to factor") from exc
    w = np.linalg.solve(cq, cov_p)
    tr = float(np.trace(np.linalg.solve(cq.T, w)))
    z = np.linalg.solve(cq, mean_q - mean_p)
    mean_term = 0.5 * float(z @ z)
    trace_term = 0.5 * (tr - p)
    logdet_term = 0.5 * (logdet_q - logdet_p)
    total = mean_term + trace_term + logdet_term
    return KldReport(total, total / p, mean_term, trace_term, logdet_term)


@dataclass(frozen=True)
class NllCurvePoint:
    index: int
    n_edges: int
    train_nll: float
    test_nll: float


def nll_curve(train: Ensemble, test: Ensemble, graphs: list[CIGraph],
              fit=fit_affine_kr) -> tuple[list[NllCurvePoint], int]:
    """Train/test average negative log likelihood over a nested graph list;
    returns the points and the index of the test-loss minimiser. Training loss
    is non-increasing along the nesting (exact property of nested fits)."""
    if not graphs:
        raise ValueError("need at least one graph")
    for a, b in zip(graphs, graphs[1:]):
        if not a.is_subgraph_of(b):
            raise ValueError("graph list must be nested")
    points = []
    for idx, g in enumerate(graphs):
        krmap = fit(train, g)
        prec = unwrap_precision(krmap)
        factor = cholesky(prec)
        tr_nll = gaussian_nll(train, prec, krmap.mean, factor=factor)
        te_nll = gaussian_nll(test, prec, krmap.mean, factor=factor)
        points.append(NllCurvePoint(idx, g.n_edges, tr_nll, te_nll))
    argmin = int(np.argmin([pt.test_nll for pt in points]))
    return points, argmin


def update_summary(prior: Ensemble, posterior: Ensemble) -> dict:
    """Per-variable mean update and posterior/prior variance ratio."""
    if prior.p != posterior.p or prior.n != posterior.n:
        raise DimensionMismatch("prior and posterior shapes differ")
    prior_var = prior.data.var(axis=0)
    post_var = posterior.data.var(axis=0)
    ratio = np.full(prior.p, np.nan)
    ok = prior_var > 0
    ratio[ok] = post_var[ok] / prior_var[ok]
    return {"mean_update": posterior.mean() - prior.mean(),
            "variance_ratio": ratio}
