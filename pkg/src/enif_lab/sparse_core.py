"""Sparse symmetric storage, sparse Cholesky, orderings, and SPD solves.

Everything downstream (precision fitting, information updates, divergence
evaluation) runs on these primitives. Storage is lower-triangle coordinate
triplets with symmetric semantics; the numeric factorisation works on the
banded envelope of the permuted pattern (column-wise, vectorised across each
column's window), while structural questions (fill-in, factor patterns) are
answered by a separate symbolic elimination so the two never get conflated.

All types are immutable after construction and all operations are pure
functions of their inputs; nothing here keeps hidden mutable state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, NotPositiveDefinite, SolveFailed
from .graph import CIGraph

# Pivots below this fraction of the largest original diagonal entry are
# treated as loss of positive definiteness rather than roundoff.
PIVOT_RTOL = 1e-12


# ---------------------------------------------------------------------------
# Permutations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Permutation:
    """Bijection on 0..p-1; position i of the permuted vector holds original
    index order[i]."""

    order: np.ndarray
    kind: str = "identity"

    def __post_init__(self):
        order = np.asarray(self.order, dtype=int)
        object.__setattr__(self, "order", order)
        order.setflags(write=False)
        p = order.size
        seen = np.zeros(p, dtype=bool)
        seen[order] = True
        if not seen.all():
            raise ValueError("order is not a bijection on 0..p-1")
        if self.kind not in ("identity", "reverse", "fill-reducing", "composite"):
            raise ValueError(f"unknown permutation kind {self.kind!r}")

    @property
    def p(self) -> int:
        return self.order.size

    @property
    def inverse_order(self) -> np.ndarray:
        inv = np.empty(self.p, dtype=int)
        inv[self.order] = np.arange(self.p)
        return inv

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Gather along axis 0: position i of the result holds v[order[i]]."""
        return np.asarray(v)[self.order]

    def unapply(self, v: np.ndarray) -> np.ndarray:
        out = np.empty_like(np.asarray(v))
        out[self.order] = v
        return out

    def invert(self) -> "Permutation":
        return Permutation(self.inverse_order, kind=self.kind)

    def compose(self, first: "Permutation") -> "Permutation":
        """Permutation equivalent to applying `first`, then `self`."""
        if first.p != self.p:
            raise DimensionMismatch("permutation sizes differ")
        return Permutation(first.order[self.order], kind="composite")


def identity_permutation(p: int) -> Permutation:
    return Permutation(np.arange(p), kind="identity")


def reverse_permutation(p: int) -> Permutation:
    return Permutation(np.arange(p)[::-1].copy(), kind="reverse")


# ---------------------------------------------------------------------------
# Sparse symmetric storage
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SparseSpd:
    """Symmetric sparse matrix stored as its lower triangle.

    The stored pattern is the declared sparsity: entries may hold any real
    value (including zero), but nothing outside the pattern exists. Positive
    definiteness is asserted where it matters, at factorisation time. All
    diagonal entries must be stored.
    """

    dim: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=int)
        cols = np.asarray(self.cols, dtype=int)
        values = np.asarray(self.values, dtype=float)
        if not (rows.shape == cols.shape == values.shape):
            raise DimensionMismatch("triplet arrays must have equal length")
        if rows.size and (rows.min() < 0 or rows.max() >= self.dim
                          or cols.min() < 0 or cols.max() >= self.dim):
            raise DimensionMismatch("triplet index outside matrix")
        if np.any(rows < cols):
            raise ValueError("lower-triangle storage requires row >= col")
        key = rows * self.dim + cols
        sort = np.argsort(key, kind="stable")
        rows, cols, values, key = rows[sort], cols[sort], values[sort], key[sort]
        if key.size and np.any(np.diff(key) == 0):
            raise ValueError("duplicate entries in triplets")
        ndiag = int(np.count_nonzero(rows == cols))
        if ndiag != self.dim:
            raise ValueError("all diagonal entries must be stored")
        for name, arr in (("rows", rows), ("cols", cols), ("values", values)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    # -- constructors -------------------------------------------------------

    @classmethod
    def from_triplets(cls, dim, rows, cols, values) -> "SparseSpd":
        """Build from unordered triplets; upper-triangle entries are mirrored
        down, and duplicates (after mirroring) raise."""
        rows = np.asarray(rows, dtype=int)
        cols = np.asarray(cols, dtype=int)
        values = np.asarray(values, dtype=float)
        lo = np.minimum(rows, cols)
        hi = np.maximum(rows, cols)
        return cls(dim, hi, lo, values)

    @classmethod
    def from_dense(cls, dense: np.ndarray, pattern: CIGraph | None = None,
                   atol: float = 0.0) -> "SparseSpd":
        dense = np.asarray(dense, dtype=float)
        p = dense.shape[0]
        if dense.shape != (p, p):
            raise DimensionMismatch("dense matrix must be square")
        if not np.allclose(dense, dense.T, atol=1e-12 * (1 + np.abs(dense).max())):
            raise ValueError("dense matrix is not symmetric")
        if pattern is None:
            ii, jj = np.nonzero(np.abs(np.tril(dense)) > atol)
            mask_diag = np.isin(np.arange(p), ii[ii == jj])
            rows = np.concatenate([ii, np.arange(p)[~mask_diag]])
            cols = np.concatenate([jj, np.arange(p)[~mask_diag]])
        else:
            if pattern.p != p:
                raise DimensionMismatch("pattern size differs from matrix")
            e = np.array([(max(i, j), min(i, j)) for i, j in pattern.edges],
                         dtype=int).reshape(-1, 2)
            rows = np.concatenate([np.arange(p), e[:, 0]])
            cols = np.concatenate([np.arange(p), e[:, 1]])
        return cls(p, rows, cols, dense[rows, cols])

    @classmethod
    def from_scipy_symmetric(cls, mat, sym_rtol: float = 1e-9) -> "SparseSpd":
        """Lower triangle of a (numerically) symmetric scipy sparse matrix."""
        m = sp.coo_matrix(mat)
        scale = np.abs(m.data).max() if m.nnz else 1.0
        asym = abs(m - m.T)
        if asym.nnz and asym.max() > sym_rtol * scale:
            raise ValueError("matrix is not symmetric")
        msym = ((m + m.T) * 0.5).tocoo()
        keep = msym.row >= msym.col
        rows, cols, vals = msym.row[keep], msym.col[keep], msym.data[keep]
        have_diag = np.zeros(m.shape[0], dtype=bool)
        have_diag[rows[rows == cols]] = True
        missing = np.nonzero(~have_diag)[0]
        rows = np.concatenate([rows, missing])
        cols = np.concatenate([cols, missing])
        vals = np.concatenate([vals, np.zeros(missing.size)])
        return cls(m.shape[0], rows, cols, vals)

    @classmethod
    def diagonal(cls, diag: np.ndarray) -> "SparseSpd":
        diag = np.asarray(diag, dtype=float)
        idx = np.arange(diag.size)
        return cls(diag.size, idx, idx, diag)

    @classmethod
    def identity(cls, p: int) -> "SparseSpd":
        return cls.diagonal(np.ones(p))

    # -- views --------------------------------------------------------------

    @property
    def nnz_lower(self) -> int:
        return self.rows.size

    def _sym_coo(self) -> sp.coo_matrix:
        off = self.rows != self.cols
        r = np.concatenate([self.rows, self.cols[off]])
        c = np.concatenate([self.cols, self.rows[off]])
        v = np.concatenate([self.values, self.values[off]])
        return sp.coo_matrix((v, (r, c)), shape=(self.dim, self.dim))

    def to_csr(self) -> sp.csr_matrix:
        cached = getattr(self, "_csr_cache", None)
        if cached is None:
            cached = self._sym_coo().tocsr()
            object.__setattr__(self, "_csr_cache", cached)
        return cached

    def to_dense(self) -> np.ndarray:
        return self.to_csr().toarray()

    def diag(self) -> np.ndarray:
        out = np.zeros(self.dim)
        mask = self.rows == self.cols
        out[self.rows[mask]] = self.values[mask]
        return out

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.to_csr() @ x

    def pattern_graph(self) -> CIGraph:
        """Graph of the stored off-diagonal pattern (zero values included)."""
        edges = {(int(min(i, j)), int(max(i, j)))
                 for i, j in zip(self.rows, self.cols) if i != j}
        return CIGraph(self.dim, edges)

    def scaled(self, factor: float) -> "SparseSpd":
        return SparseSpd(self.dim, self.rows, self.cols, self.values * factor)

    def permuted(self, perm: Permutation) -> "SparseSpd":
        """P A P^T under the convention new[i] = old[order[i]]."""
        if perm.p != self.dim:
            raise DimensionMismatch("permutation size differs from matrix")
        inv = perm.inverse_order
        return SparseSpd.from_triplets(self.dim, inv[self.rows], inv[self.cols],
                                       self.values)

    def add(self, other: "SparseSpd") -> "SparseSpd":
        """Sum with pattern union."""
        if other.dim != self.dim:
            raise DimensionMismatch("dimensions differ")
        key_a = self.rows * self.dim + self.cols
        key_b = other.rows * self.dim + other.cols
        keys = np.concatenate([key_a, key_b])
        vals = np.concatenate([self.values, other.values])
        uniq, inverse = np.unique(keys, return_inverse=True)
        summed = np.zeros(uniq.size)
        np.add.at(summed, inverse, vals)
        return SparseSpd(self.dim, uniq // self.dim, uniq % self.dim, summed)

    def max_abs(self) -> float:
        return float(np.abs(self.values).max()) if self.values.size else 0.0


# ---------------------------------------------------------------------------
# Symbolic factorisation and fill-in
# ---------------------------------------------------------------------------

def symbolic_cholesky(graph: CIGraph, perm: Permutation) -> list[np.ndarray]:
    """Structural factor pattern of a matrix with the given graph under perm.

    Returns, for each column j (permuted labels), the sorted strictly-lower
    row indices of the factor. Uses the elimination-tree column-merge rule:
    each column passes its pattern (minus its first below-diagonal row) to
    that row's column.
    """
    if perm.p != graph.p:
        raise DimensionMismatch("permutation size differs from graph")
    p = graph.p
    inv = perm.inverse_order
    cols: list[set[int]] = [set() for _ in range(p)]
    for i, j in graph.edges:
        a, b = int(inv[i]), int(inv[j])
        cols[min(a, b)].add(max(a, b))
    for j in range(p):
        cj = cols[j]
        if cj:
            parent = min(cj)
            if len(cj) > 1:
                cols[parent].update(cj.difference((parent,)))
    return [np.fromiter(sorted(c), dtype=int, count=len(c)) for c in cols]


def factor_nnz(columns: list[np.ndarray]) -> int:
    """Structural nonzeros of the factor, diagonal included."""
    return len(columns) + sum(c.size for c in columns)


def fill_in(graph: CIGraph, perm: Permutation) -> int:
    """Structural nonzeros the factor adds beyond the matrix pattern."""
    cols = symbolic_cholesky(graph, perm)
    return factor_nnz(cols) - graph.p - graph.n_edges


# ---------------------------------------------------------------------------
# Fill-reducing ordering (reverse Cuthill-McKee with deterministic ties)
# ---------------------------------------------------------------------------

def _bfs_levels(adj, start, seen):
    levels = [[start]]
    seen[start] = True
    frontier = [start]
    while frontier:
        nxt = []
        for v in frontier:
            for w in adj[v]:
                if not seen[w]:
                    seen[w] = True
                    nxt.append(w)
        if nxt:
            levels.append(sorted(nxt))
        frontier = nxt
    return levels


def _pseudo_peripheral(adj, deg, component):
    in_comp = np.zeros(len(adj), dtype=bool)
    in_comp[list(component)] = True
    start = min(component, key=lambda v: (deg[v], v))
    ecc = -1
    while True:
        seen = ~in_comp
        levels = _bfs_levels(adj, start, seen.copy())
        if len(levels) - 1 <= ecc:
            return start
        ecc = len(levels) - 1
        start = min(levels[-1], key=lambda v: (deg[v], v))


def rcm_order(graph: CIGraph) -> np.ndarray:
    """Reverse Cuthill-McKee order; neighbour ties broken by ascending degree
    then ascending vertex index, components taken in ascending-vertex order."""
    p = graph.p
    adj = graph.adjacency()
    deg = graph.degrees()
    visited = np.zeros(p, dtype=bool)
    order: list[int] = []
    for root in range(p):
        if visited[root]:
            continue
        component = set()
        stack = [root]
        component.add(root)
        while stack:
            v = stack.pop()
            for w in adj[v]:
                if w not in component:
                    component.add(w)
                    stack.append(w)
        start = _pseudo_peripheral(adj, deg, component)
        visited[start] = True
        queue = [start]
        head = 0
        while head < len(queue):
            v = queue[head]
            head += 1
            order.append(v)
            nbrs = sorted((w for w in adj[v] if not visited[w]),
                          key=lambda w: (deg[w], w))
            for w in nbrs:
                visited[w] = True
                queue.append(w)
    return np.array(order[::-1], dtype=int)


def fill_reducing_order(graph: CIGraph) -> Permutation:
    """RCM guarded by the contract that it never does worse than the natural
    order (measured as structural factor nonzeros); deterministic."""
    if graph.p <= 1 or not graph.edges:
        return identity_permutation(graph.p)
    rcm = Permutation(rcm_order(graph), kind="fill-reducing")
    ident = identity_permutation(graph.p)
    if fill_in(graph, rcm) <= fill_in(graph, ident):
        return rcm
    return ident


def kr_order_from_cholesky(perm_star: Permutation) -> Permutation:
    """Composite ordering (reverse after perm_star) under which the fitted
    lower-triangular map factor carries the transposed, index-reversed pattern
    of the Cholesky factor obtained under perm_star."""
    p = perm_star.p
    order = perm_star.order[::-1].copy()
    kind = "identity" if np.array_equal(order, np.arange(p)) else "composite"
    return Permutation(order, kind=kind)


# ---------------------------------------------------------------------------
# Numeric Cholesky on the banded envelope
# ---------------------------------------------------------------------------

def _band_from_spd(m: SparseSpd, perm: Permutation) -> tuple[np.ndarray, int]:
    inv = perm.inverse_order
    pr = inv[m.rows]
    pc = inv[m.cols]
    lo = np.minimum(pr, pc)
    hi = np.maximum(pr, pc)
    bw = int((hi - lo).max()) if m.rows.size else 0
    band = np.zeros((bw + 1, m.dim))
    band[hi - lo, lo] = m.values
    return band, bw


def _banded_cholesky_inplace(band: np.ndarray, piv_floor: float) -> None:
    bw1, p = band.shape
    wmax = bw1 - 1
    for j in range(p):
        d = band[0, j]
        if not np.isfinite(d) or d <= piv_floor:
            raise NotPositiveDefinite(
                f"pivot {d:.3e} at column {j} (floor {piv_floor:.3e})")
        d = math.sqrt(d)
        band[0, j] = d
        w = min(wmax, p - 1 - j)
        if w == 0:
            continue
        v = band[1:w + 1, j] / d
        band[1:w + 1, j] = v
        vpad = np.concatenate([v, np.zeros(w - 1)]) if w > 1 else v
        win = np.lib.stride_tricks.sliding_window_view(vpad, w)[:w] if w > 1 \
            else v.reshape(1, 1)
        band[0:w, j + 1:j + 1 + w] -= win * v[None, :]


def _solve_lower_banded(band: np.ndarray, b: np.ndarray) -> np.ndarray:
    x = np.array(b, dtype=float, copy=True)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    bw1, p = band.shape
    wmax = bw1 - 1
    for j in range(p):
        x[j] /= band[0, j]
        w = min(wmax, p - 1 - j)
        if w:
            x[j + 1:j + 1 + w] -= band[1:w + 1, j][:, None] * x[j]
    return x[:, 0] if squeeze else x


def _solve_upper_banded(band: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve L^T x = b with L given in lower band form."""
    x = np.array(b, dtype=float, copy=True)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    bw1, p = band.shape
    wmax = bw1 - 1
    for j in range(p - 1, -1, -1):
        w = min(wmax, p - 1 - j)
        if w:
            x[j] -= band[1:w + 1, j] @ x[j + 1:j + 1 + w]
        x[j] /= band[0, j]
    return x[:, 0] if squeeze else x


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower factor L with L L^T equal to the symmetrically permuted matrix.

    The structural pattern (rows/cols/values, permuted labels) comes from the
    symbolic elimination; numeric values are read off the banded factor, whose
    in-band entries outside the structural pattern are exact zeros.
    """

    dim: int
    perm: Permutation
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    _band: np.ndarray

    @property
    def nnz(self) -> int:
        return self.rows.size

    def diagonal(self) -> np.ndarray:
        return self._band[0].copy()

    def logdet(self) -> float:
        """log-determinant of the factored matrix."""
        return 2.0 * float(np.log(self._band[0]).sum())

    def to_csr(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values, (self.rows, self.cols)),
                             shape=(self.dim, self.dim))

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve A x = rhs for the original (unpermuted) matrix A."""
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.dim:
            raise DimensionMismatch("rhs has wrong leading dimension")
        y = _solve_lower_banded(self._band, rhs[self.perm.order])
        z = _solve_upper_banded(self._band, y)
        return self.perm.unapply(z)

    def solve_lower(self, rhs: np.ndarray) -> np.ndarray:
        """Solve L x = rhs (permuted labels)."""
        return _solve_lower_banded(self._band, rhs)

    def solve_upper(self, rhs: np.ndarray) -> np.ndarray:
        """Solve L^T x = rhs (permuted labels)."""
        return _solve_upper_banded(self._band, rhs)


def cholesky(m: SparseSpd, perm: Permutation | None = None) -> CholeskyFactor:
    """Sparse Cholesky of an SPD matrix under a symmetric permutation.

    Failure to factor raises NotPositiveDefinite; nothing is regularised.
    """
    if perm is None:
        perm = fill_reducing_order(m.pattern_graph())
    if perm.p != m.dim:
        raise DimensionMismatch("permutation size differs from matrix")
    band, _ = _band_from_spd(m, perm)
    piv_floor = PIVOT_RTOL * float(m.diag().max(initial=0.0))
    _banded_cholesky_inplace(band, piv_floor)
    columns = symbolic_cholesky(m.pattern_graph(), perm)
    counts = np.array([c.size for c in columns], dtype=int)
    cols = np.repeat(np.arange(m.dim), counts + 1)
    rows = np.empty(cols.size, dtype=int)
    vals = np.empty(cols.size)
    pos = 0
    for j, c in enumerate(columns):
        rows[pos] = j
        vals[pos] = band[0, j]
        if c.size:
            rows[pos + 1:pos + 1 + c.size] = c
            vals[pos + 1:pos + 1 + c.size] = band[c - j, j]
        pos += 1 + c.size
    return CholeskyFactor(m.dim, perm, rows, cols, vals, band)


def solve_spd(m: SparseSpd, rhs: np.ndarray,
              perm: Permutation | None = None,
              factor: CholeskyFactor | None = None) -> np.ndarray:
    """Direct SPD solve with one step of iterative refinement and a residual
    check; raises SolveFailed instead of returning a bad solution."""
    rhs = np.asarray(rhs, dtype=float)
    if factor is None:
        factor = cholesky(m, perm)
    x = factor.solve(rhs)
    csr = m.to_csr()
    for _ in range(2):
        resid = rhs - csr @ x
        scale = np.abs(rhs).max()
        if scale == 0.0 or np.abs(resid).max() <= 1e-8 * scale:
            return x
        x = x + factor.solve(resid)
    resid = rhs - csr @ x
    scale = np.abs(rhs).max()
    if scale > 0.0 and np.abs(resid).max() > 1e-8 * scale:
        raise SolveFailed(
            f"residual {np.abs(resid).max():.3e} exceeds 1e-8 * {scale:.3e}")
    return x
