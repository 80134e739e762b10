"""Simplicial triangulations of rectangles."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import pi

import numpy as np

from .refelem import LOCAL_EDGES, affine_data

DEFAULT_DOMAIN = ((0.0, pi), (0.0, pi))


class MeshError(ValueError):
    pass


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangle mesh with globally oriented edges.

    Attributes
    ----------
    vertices : (V, 2) float
    triangles : (T, 3) int, counterclockwise
    edges : (E, 2) int, each stored low -> high vertex index
    cell_edges : (T, 3) int
        Local edge ``i`` is opposite local vertex ``i``.
    cell_edge_signs : (T, 3) float
        +1 where the local traversal (i+1 -> i+2) agrees with the global
        low-to-high edge orientation, -1 otherwise.
    edge_cells : (E, 2) int
        Incident cells; the second entry is -1 on boundary edges.
    boundary_edge : (E,) bool
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    cell_edges: np.ndarray
    cell_edge_signs: np.ndarray
    edge_cells: np.ndarray
    boundary_edge: np.ndarray

    @classmethod
    def from_triangles(cls, vertices, triangles) -> "Mesh":
        vertices = np.asarray(vertices, dtype=float)
        triangles = np.asarray(triangles, dtype=np.int64)
        _, _, det = affine_data(vertices[triangles])
        if np.any(det <= 0):
            raise MeshError("triangles must be counterclockwise and non-degenerate")
        T = len(triangles)
        local = np.stack([triangles[:, [a, b]] for a, b in LOCAL_EDGES], axis=1)
        pairs = np.sort(local.reshape(-1, 2), axis=1)
        edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
        cell_edges = inverse.reshape(T, 3)
        signs = np.where(local[:, :, 0] < local[:, :, 1], 1.0, -1.0)

        E = len(edges)
        edge_cells = np.full((E, 2), -1, dtype=np.int64)
        count = np.zeros(E, dtype=np.int64)
        for t in range(T):
            for e in cell_edges[t]:
                if count[e] >= 2:
                    raise MeshError(f"edge {e} shared by more than two cells")
                edge_cells[e, count[e]] = t
                count[e] += 1
        return cls(_frozen(vertices), _frozen(triangles), _frozen(edges),
                   _frozen(cell_edges), _frozen(signs), _frozen(edge_cells),
                   _frozen(count == 1))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def cell_vertices(self) -> np.ndarray:
        """Coordinates per cell, (T, 3, 2)."""
        return self.vertices[self.triangles]

    @cached_property
    def areas(self) -> np.ndarray:
        return 0.5 * affine_data(self.cell_vertices)[2]

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.linalg.norm(d, axis=1)

    @property
    def h(self) -> float:
        """Mesh size: the longest edge."""
        return float(self.edge_lengths.max())

    @cached_property
    def boundary_vertex(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.edges[self.boundary_edge].ravel()] = True
        return mask

    def permuted(self, perm) -> "Mesh":
        """Same mesh with cells listed in the order ``perm``."""
        return Mesh.from_triangles(self.vertices, self.triangles[np.asarray(perm)])


def generate_uniform_grid(N: int, domain=DEFAULT_DOMAIN) -> Mesh:
    """Uniform N x N grid of squares, each split along its
    lower-left to upper-right diagonal into two triangles.

    >>> generate_uniform_grid(16).n_cells
    512
    """
    if int(N) != N or N < 1:
        raise MeshError(f"N must be a positive integer, got {N!r}")
    N = int(N)
    (x0, x1), (y0, y1) = domain
    if not (x1 > x0 and y1 > y0):
        raise MeshError(f"degenerate rectangle {domain!r}")
    xs = np.linspace(x0, x1, N + 1)
    ys = np.linspace(y0, y1, N + 1)
    X, Y = np.meshgrid(xs, ys)  # row j holds y = ys[j]
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(N), np.arange(N))
    i, j = i.ravel(), j.ravel()
    ll = j * (N + 1) + i
    lr = ll + 1
    ur = ll + N + 2
    ul = ll + N + 1
    lower = np.column_stack([ll, lr, ur])
    upper = np.column_stack([ll, ur, ul])
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return Mesh.from_triangles(vertices, triangles)


@dataclass(frozen=True)
class CellGeometry:
    """Affine map data of one cell; normals and tangents per local edge."""

    jacobian: np.ndarray
    inverse: np.ndarray
    det: float
    normals: np.ndarray
    tangents: np.ndarray
    lengths: np.ndarray


def edge_frames(verts):
    """Outward unit normals, unit tangents and lengths per local edge.

    ``verts`` is (T, 3, 2).  The tangent follows the counterclockwise
    traversal and equals the normal rotated by +90 degrees, t = (-n_y, n_x).
    """
    d = np.stack([verts[:, b] - verts[:, a] for a, b in LOCAL_EDGES], axis=1)
    lengths = np.linalg.norm(d, axis=2)
    t = d / lengths[..., None]
    n = np.stack([t[..., 1], -t[..., 0]], axis=-1)
    return n, t, lengths


def geometry(mesh: Mesh, cell: int) -> CellGeometry:
    if not 0 <= cell < mesh.n_cells:
        raise IndexError(f"cell {cell} out of range")
    verts = mesh.cell_vertices[cell]
    J, Jinv, det = affine_data(verts)
    n, t, lengths = edge_frames(verts[None])
    return CellGeometry(J, Jinv, float(det), n[0], t[0], lengths[0])
