"""Minimal mesh containers for the finite-element assembly.

Only what the experiments need: uniform 1D interval meshes, triangulated
rectangles, and a plain text exchange format for externally supplied
triangulations ("nv nt" header, nv vertex lines "x y", nt triangle lines
"i j k", 0-based).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateElement


@dataclass(frozen=True)
class Mesh1D:
    """Sorted node coordinates; elements are consecutive intervals."""

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("need at least two 1D nodes")
        if np.any(np.diff(nodes) <= 0):
            raise DegenerateElement("1D nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def n_vertices(self) -> int:
        return self.nodes.size

    @property
    def n_elements(self) -> int:
        return self.nodes.size - 1


def uniform_interval(p: int, length: float = 1.0) -> Mesh1D:
    return Mesh1D(np.linspace(0.0, length, p))


@dataclass(frozen=True)
class TriMesh:
    """Triangulation: vertex coordinates (p, 2) and triangle index rows (t, 3)."""

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=float)
        tris = np.asarray(self.triangles, dtype=int)
        if verts.ndim != 2 or verts.shape[1] != 2:
            raise ValueError("vertices must be (p, 2)")
        if tris.ndim != 2 or tris.shape[1] != 3:
            raise ValueError("triangles must be (t, 3)")
        if tris.size and (tris.min() < 0 or tris.max() >= verts.shape[0]):
            raise ValueError("triangle index outside vertex range")
        areas = _signed_areas(verts, tris)
        if np.any(np.abs(areas) <= 1e-14 * max(1.0, np.abs(verts).max()) ** 2):
            raise DegenerateElement("triangle with (near-)zero area")
        # normalise orientation so all areas are positive
        flipped = tris.copy()
        neg = areas < 0
        flipped[neg] = flipped[neg][:, [0, 2, 1]]
        verts.setflags(write=False)
        flipped.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "triangles", flipped)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_elements(self) -> int:
        return self.triangles.shape[0]

    def areas(self) -> np.ndarray:
        return _signed_areas(self.vertices, self.triangles)

    def adjacency_edges(self) -> set[tuple[int, int]]:
        """Vertex pairs sharing an element."""
        edges = set()
        for tri in self.triangles:
            a, b, c = (int(v) for v in tri)
            edges.add((min(a, b), max(a, b)))
            edges.add((min(a, c), max(a, c)))
            edges.add((min(b, c), max(b, c)))
        return edges


def _signed_areas(verts: np.ndarray, tris: np.ndarray) -> np.ndarray:
    a = verts[tris[:, 0]]
    b = verts[tris[:, 1]]
    c = verts[tris[:, 2]]
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                  - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1]))


def structured_rectangle(nx: int, ny: int, lx: float = 1.0, ly: float = 1.0) -> TriMesh:
    """nx-by-ny vertex grid on [0,lx]x[0,ly], each cell split along one diagonal."""
    if nx < 2 or ny < 2:
        raise ValueError("need at least a 2x2 vertex grid")
    xs = np.linspace(0.0, lx, nx)
    ys = np.linspace(0.0, ly, ny)
    verts = np.array([(x, y) for y in ys for x in xs])
    tris = []
    for r in range(ny - 1):
        for c in range(nx - 1):
            v00 = r * nx + c
            v10 = v00 + 1
            v01 = v00 + nx
            v11 = v01 + 1
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    return TriMesh(verts, np.array(tris))


def write_trimesh(mesh: TriMesh, path: str | Path) -> None:
    lines = [f"{mesh.n_vertices} {mesh.n_elements}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines += [f"{a} {b} {c}" for a, b, c in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")


def read_trimesh(path: str | Path) -> TriMesh:
    tokens = Path(path).read_text().split()
    nv, nt = int(tokens[0]), int(tokens[1])
    flat = np.array(tokens[2:2 + 2 * nv], dtype=float)
    verts = flat.reshape(nv, 2)
    tris = np.array(tokens[2 + 2 * nv:2 + 2 * nv + 3 * nt], dtype=int).reshape(nt, 3)
    return TriMesh(verts, tris)
