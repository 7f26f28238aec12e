"""Text and binary exchange formats.

- symmetric sparse matrix: header "p nnz", then "i j value" triplet lines
  (0-based, lower triangle);
- rectangular sparse matrix: header "m p nnz", then "i j value" lines;
- graph: header "p", then "i j" edge lines;
- ensemble: CSV (n rows, p columns, no header) or a compact binary
  (8-byte magic, int64 n, int64 p, row-major float64);
- fitted triangular map: text blocks (permutation, mean, factor triplets).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .graph import CIGraph
from .simulators import Ensemble
from .sparse_core import Permutation, SparseSpd
from .transport import KRMap

ENSEMBLE_MAGIC = b"ENIFENS\x00"


# -- symmetric sparse matrices ----------------------------------------------

def write_spd(m: SparseSpd, path: str | Path) -> None:
    lines = [f"{m.dim} {m.nnz_lower}"]
    lines += [f"{i} {j} {v:.17g}" for i, j, v in zip(m.rows, m.cols, m.values)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_spd(path: str | Path) -> SparseSpd:
    tokens = Path(path).read_text().split()
    p, nnz = int(tokens[0]), int(tokens[1])
    data = np.array(tokens[2:2 + 3 * nnz], dtype=float).reshape(nnz, 3)
    return SparseSpd.from_triplets(p, data[:, 0].astype(int),
                                   data[:, 1].astype(int), data[:, 2])


# -- rectangular sparse matrices (observation operators) ---------------------

def write_rect(mat, path: str | Path) -> None:
    coo = sp.coo_matrix(mat)
    lines = [f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}"]
    lines += [f"{i} {j} {v:.17g}" for i, j, v in zip(coo.row, coo.col, coo.data)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_rect(path: str | Path) -> sp.csr_matrix:
    tokens = Path(path).read_text().split()
    m, p, nnz = int(tokens[0]), int(tokens[1]), int(tokens[2])
    data = np.array(tokens[3:3 + 3 * nnz], dtype=float).reshape(nnz, 3)
    return sp.csr_matrix((data[:, 2], (data[:, 0].astype(int),
                                       data[:, 1].astype(int))), shape=(m, p))


# -- graphs -------------------------------------------------------------------

def write_graph(g: CIGraph, path: str | Path) -> None:
    lines = [str(g.p)]
    lines += [f"{i} {j}" for i, j in sorted(g.edges)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_graph(path: str | Path) -> CIGraph:
    tokens = Path(path).read_text().split()
    p = int(tokens[0])
    pairs = np.array(tokens[1:], dtype=int).reshape(-1, 2)
    return CIGraph(p, {(int(i), int(j)) for i, j in pairs})


# -- ensembles ----------------------------------------------------------------

def write_ensemble_csv(ens: Ensemble, path: str | Path) -> None:
    np.savetxt(path, ens.data, delimiter=",", fmt="%.17g")


def read_ensemble_csv(path: str | Path) -> Ensemble:
    return Ensemble(np.loadtxt(path, delimiter=",", ndmin=2))


def write_ensemble_binary(ens: Ensemble, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(ENSEMBLE_MAGIC)
        np.array([ens.n, ens.p], dtype="<i8").tofile(fh)
        ens.data.astype("<f8").tofile(fh)


def read_ensemble_binary(path: str | Path) -> Ensemble:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != ENSEMBLE_MAGIC:
            raise ValueError(f"bad magic {magic!r} in {path}")
        n, p = np.fromfile(fh, dtype="<i8", count=2)
        data = np.fromfile(fh, dtype="<f8", count=int(n) * int(p))
    return Ensemble(data.reshape(int(n), int(p)))


def write_ensemble(ens: Ensemble, path: str | Path, fmt: str | None = None) -> None:
    fmt = fmt or ("bin" if str(path).endswith(".bin") else "csv")
    if fmt == "csv":
        write_ensemble_csv(ens, path)
    elif fmt == "bin":
        write_ensemble_binary(ens, path)
    else:
        raise ValueError(f"unknown ensemble format {fmt!r}")


def read_ensemble(path: str | Path, fmt: str | None = None) -> Ensemble:
    fmt = fmt or ("bin" if str(path).endswith(".bin") else "csv")
    return read_ensemble_binary(path) if fmt == "bin" else read_ensemble_csv(path)


# -- fitted triangular maps ---------------------------------------------------

def write_krmap(krmap: KRMap, path: str | Path) -> None:
    lines = [f"krmap {krmap.dim} {krmap.nnz}"]
    lines.append("perm " + " ".join(str(int(i)) for i in krmap.perm.order))
    lines.append("mean " + " ".join(f"{v:.17g}" for v in krmap.mean))
    lines += [f"{i} {j} {v:.17g}"
              for i, j, v in zip(krmap.rows, krmap.cols, krmap.values)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_krmap(krmap_path: str | Path, source_graph: CIGraph | None = None) -> KRMap:
    lines = Path(krmap_path).read_text().splitlines()
    head = lines[0].split()
    if head[0] != "krmap":
        raise ValueError("not a krmap file")
    dim, nnz = int(head[1]), int(head[2])
    order = np.array(lines[1].split()[1:], dtype=int)
    mean = np.array(lines[2].split()[1:], dtype=float)
    trip = np.array([ln.split() for ln in lines[3:3 + nnz]], dtype=float)
    kind = "identity" if np.array_equal(order, np.arange(dim)) else "composite"
    if source_graph is None:
        source_graph = CIGraph(dim, frozenset())
    return KRMap(dim=dim, rows=trip[:, 0].astype(int), cols=trip[:, 1].astype(int),
                 values=trip[:, 2], perm=Permutation(order, kind=kind),
                 mean=mean, source_graph=source_graph)
