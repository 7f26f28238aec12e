"""Affine triangular-map fitting under graph sparsity.

The lower-triangular factor C is fitted row by row: under a product-form
reference each row's objective separates, and for an affine row it reduces to
regressing the row variable on its allowed predecessors. With residual
standard deviation s the row gets diagonal 1/s and coefficients -beta/s, so
C^T C is the fitted precision. Rows are fitted under a composite ordering
(reverse after the fill-reducing order) whose factor pattern is the
transposed, index-reversed pattern of the ordinary Cholesky factor; this is
what keeps the number of estimated entries close to the graph size.

Rows are independent given the ensemble; fitting holds no shared state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import DimensionMismatch, UnderdeterminedRow, ZeroResidual
from .graph import CIGraph
from .simulators import Ensemble
from .sparse_core import (CholeskyFactor, Permutation, SparseSpd, cholesky,
                          fill_reducing_order, kr_order_from_cholesky,
                          symbolic_cholesky)

RESIDUAL_SD_FLOOR = 1e-12


@dataclass(frozen=True)
class KRMap:
    """Fitted affine triangular map.

    rows/cols/values hold the strictly-sorted triplets of the lower factor C
    in the composite ordering's labels; `perm` maps original indices to that
    ordering (position i holds original index perm.order[i]); `mean` is the
    per-variable centring removed before the fit.
    """

    dim: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    perm: Permutation
    mean: np.ndarray
    source_graph: CIGraph

    def __post_init__(self):
        for name in ("rows", "cols", "values"):
            arr = np.asarray(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        mean = np.asarray(self.mean, dtype=float)
        mean.setflags(write=False)
        object.__setattr__(self, "mean", mean)

    @property
    def nnz(self) -> int:
        return self.rows.size

    @property
    def perm_star(self) -> Permutation:
        """The fill-reducing ordering the composite one was derived from."""
        order = self.perm.order[::-1].copy()
        kind = "identity" if np.array_equal(order, np.arange(self.dim)) \
            else "fill-reducing"
        return Permutation(order, kind=kind)

    def factor_csr(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values, (self.rows, self.cols)),
                             shape=(self.dim, self.dim))

    def diagonal(self) -> np.ndarray:
        out = np.zeros(self.dim)
        mask = self.rows == self.cols
        out[self.rows[mask]] = self.values[mask]
        return out


def fit_affine_kr(ens: Ensemble, graph: CIGraph,
                  order: Permutation | None = None) -> KRMap:
    """Fit the sparse lower-triangular factor of the ensemble's precision
    restricted to the graph.

    `order` overrides the fill-reducing ordering (useful for comparing
    orderings or forcing the dense fit through a poor one); the composite
    fitting order is always reverse-after-`order`.
    """
    if ens.n < 2:
        raise ValueError("need at least two members to fit")
    if graph.p != ens.p:
        raise DimensionMismatch(
            f"graph has {graph.p} vertices, ensemble dimension is {ens.p}")
    p = ens.p
    n = ens.n
    perm_star = order if order is not None else fill_reducing_order(graph)
    if perm_star.p != p:
        raise DimensionMismatch("ordering size differs from ensemble dimension")
    factor_cols = symbolic_cholesky(graph, perm_star)
    composite = kr_order_from_cholesky(perm_star)

    mean = ens.mean()
    x = (ens.data - mean)[:, composite.order]

    rows_out: list[np.ndarray] = []
    cols_out: list[np.ndarray] = []
    vals_out: list[np.ndarray] = []
    for j in range(p):
        # row j of C mirrors column p-1-j of the ordinary factor
        preds = np.sort(p - 1 - factor_cols[p - 1 - j])
        k = preds.size
        if k >= n - 1:          # centring spends one degree of freedom
            raise UnderdeterminedRow(
                f"row {j}: {k} active predictors with only {n} members "
                f"({n - 1} after centring); reduce the graph order")
        y = x[:, j]
        if k:
            xa = x[:, preds]
            gram = xa.T @ xa
            try:
                cf = scipy.linalg.cho_factor(gram)
            except scipy.linalg.LinAlgError as exc:
                raise UnderdeterminedRow(
                    f"row {j}: singular normal equations "
                    "(collinear predictors)") from exc
            beta = scipy.linalg.cho_solve(cf, xa.T @ y)
            resid = y - xa @ beta
        else:
            beta = np.empty(0)
            resid = y
        s = float(np.sqrt(resid @ resid / n))
        if s < RESIDUAL_SD_FLOOR:
            raise ZeroResidual(
                f"row {j}: residual spread {s:.3e} below {RESIDUAL_SD_FLOOR}; "
                "degenerate or collapsed ensemble")
        rows_out.append(np.full(k + 1, j))
        cols_out.append(np.concatenate([preds, [j]]))
        vals_out.append(np.concatenate([-beta / s, [1.0 / s]]))

    return KRMap(dim=p,
                 rows=np.concatenate(rows_out),
                 cols=np.concatenate(cols_out),
                 values=np.concatenate(vals_out),
                 perm=composite, mean=mean, source_graph=graph)


def unwrap_precision(krmap: KRMap) -> SparseSpd:
    """Estimated precision in original variable labels: undo the composite
    permutation around C^T C."""
    c = krmap.factor_csr()
    lam_v = (c.T @ c).tocoo()
    order = krmap.perm.order
    return SparseSpd.from_scipy_symmetric(
        sp.coo_matrix((lam_v.data, (order[lam_v.row], order[lam_v.col])),
                      shape=(krmap.dim, krmap.dim)))


def gaussian_nll(ens_eval: Ensemble, prec: SparseSpd, mean: np.ndarray,
                 factor: CholeskyFactor | None = None) -> float:
    """Average negative log density of the members under N(mean, prec^{-1}),
    with the log-determinant taken from the sparse factor."""
    if prec.dim != ens_eval.p:
        raise DimensionMismatch("precision dimension differs from ensemble")
    if factor is None:
        factor = cholesky(prec)
    xc = ens_eval.data - np.asarray(mean, dtype=float)
    quad = float(np.sum(xc * (prec.to_csr() @ xc.T).T) / ens_eval.n)
    return 0.5 * (ens_eval.p * np.log(2.0 * np.pi) - factor.logdet() + quad)
