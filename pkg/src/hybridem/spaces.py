"""Global degree-of-freedom maps and embeddings between spaces.

Broken spaces store, per cell, coefficients over the mapped orthonormal
modal basis (vector fields: x-component modes, then y-component modes).
Conforming spaces are described by their local nodal bases together with
a cell-to-global map; ``embedding`` expands them into broken coefficients.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh
from .refelem import (
    affine_data, dubiner, edge_element_coefficients, gauss_triangle,
    lagrange_coefficients, lattice, modal_dim,
)

KINDS = ("broken-vector", "broken-scalar", "multiplier-lagrange",
         "conforming-edge", "div-conforming")


class SpaceError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SpaceHandle:
    """A global finite element space on a mesh.

    ``cell_dofs[t, i]`` is the global index of local DOF ``i`` on cell
    ``t`` (-1 if eliminated by the boundary condition) and
    ``cell_signs[t, i]`` the factor relating the global basis function to
    the local one.  For edge spaces ``local`` holds the local nodal bases as
    modal coefficients, (T, 2 nb, ldim).
    """

    kind: str
    degree: int
    mesh: Mesh
    dim: int
    cell_dofs: np.ndarray
    cell_signs: np.ndarray
    boundary_mask: np.ndarray | None = None
    local: np.ndarray | None = None
    local_rows: np.ndarray | None = None

    @property
    def local_dim(self) -> int:
        return self.cell_dofs.shape[1]

    def __repr__(self):
        return f"SpaceHandle({self.kind}({self.degree}), dim={self.dim})"


@dataclass(frozen=True, eq=False)
class FieldCoefficients:
    """Coefficient vector of a field in a global space."""

    space: SpaceHandle
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.space.dim,):
            raise SpaceError(
                f"{len(v)} coefficients for space of dimension {self.space.dim}")
        object.__setattr__(self, "values", v)


def _broken(mesh, kind, degree, ldim):
    T = mesh.n_cells
    dofs = np.arange(T * ldim).reshape(T, ldim)
    return SpaceHandle(kind, degree, mesh, T * ldim, dofs, np.ones((T, ldim)))


def _lagrange(mesh: Mesh, m: int) -> SpaceHandle:
    if m < 1:
        raise SpaceError("continuous Lagrange multipliers need degree >= 1")
    V, E, T = mesh.n_vertices, mesh.n_edges, mesh.n_cells
    ni = (m - 1) * (m - 2) // 2
    lat = lattice(m)
    tri = mesh.triangles
    dofs = np.empty((T, len(lat)), dtype=np.int64)
    interior_count = 0
    for n, idx in enumerate(lat):
        nz = np.flatnonzero(idx)
        if len(nz) == 1:
            dofs[:, n] = tri[:, nz[0]]
        elif len(nz) == 2:
            a, b = nz
            c = 3 - a - b
            e = mesh.cell_edges[:, c]
            j = np.where(tri[:, a] > tri[:, b], idx[a], idx[b])
            dofs[:, n] = V + e * (m - 1) + (j - 1)
        else:
            dofs[:, n] = V + E * (m - 1) + np.arange(T) * ni + interior_count
            interior_count += 1
    dim = V + E * (m - 1) + T * ni
    return SpaceHandle("multiplier-lagrange", m, mesh, dim, dofs, np.ones(dofs.shape))


def _edge_space(mesh: Mesh, k: int, kind: str) -> SpaceHandle:
    tangential = kind == "conforming-edge"
    coeffs, rows = edge_element_coefficients(
        mesh.cell_vertices, k, "tangential" if tangential else "normal")
    T = mesh.n_cells
    ne = 3 * (k + 1)
    ni = coeffs.shape[2] - ne
    eliminate = mesh.boundary_edge if tangential else np.zeros(mesh.n_edges, bool)
    edge_index = np.full(mesh.n_edges, -1, dtype=np.int64)
    kept = np.flatnonzero(~eliminate)
    edge_index[kept] = np.arange(len(kept))
    n_edge_dofs = len(kept) * (k + 1)

    dofs = np.empty((T, ne + ni), dtype=np.int64)
    signs = np.ones((T, ne + ni))
    mask = np.zeros((T, ne + ni), dtype=bool)
    j = np.arange(k + 1)
    for e in range(3):
        ge = mesh.cell_edges[:, e]
        s = mesh.cell_edge_signs[:, e]
        cols = slice(e * (k + 1), (e + 1) * (k + 1))
        g = edge_index[ge][:, None] * (k + 1) + j[None, :]
        bnd = eliminate[ge]
        dofs[:, cols] = np.where(bnd[:, None], -1, g)
        mask[:, cols] = bnd[:, None]
        # reversing the parametrization flips the direction and odd Legendre modes
        signs[:, cols] = s[:, None] ** (j[None, :] + 1)
    dofs[:, ne:] = n_edge_dofs + np.arange(T)[:, None] * ni + np.arange(ni)[None, :]
    return SpaceHandle(kind, k, mesh, n_edge_dofs + T * ni, dofs, signs,
                       mask, coeffs, rows)


def build_space(mesh: Mesh, kind: str, degree: int) -> SpaceHandle:
    """Build one of the global spaces.

    Kinds: ``broken-vector`` (P_k^2 per cell), ``broken-scalar`` (P_m per
    cell), ``multiplier-lagrange`` (continuous P_m, boundary DOFs kept),
    ``conforming-edge`` (tangentially continuous BDM_k with zero boundary
    trace), ``div-conforming`` (normally continuous BDM_k).
    """
    if kind not in KINDS:
        raise SpaceError(f"unknown space kind {kind!r}")
    if kind == "broken-vector":
        if not 0 <= degree <= 6:
            raise SpaceError(f"broken-vector degree {degree} unsupported")
        return _broken(mesh, kind, degree, 2 * modal_dim(degree))
    if kind == "broken-scalar":
        if not 0 <= degree <= 7:
            raise SpaceError(f"broken-scalar degree {degree} unsupported")
        return _broken(mesh, kind, degree, modal_dim(degree))
    if kind == "multiplier-lagrange":
        if not 1 <= degree <= 6:
            raise SpaceError(f"multiplier degree {degree} unsupported")
        return _lagrange(mesh, degree)
    if not 1 <= degree <= 5:
        raise SpaceError(f"{kind} degree {degree} unsupported")
    return _edge_space(mesh, degree, kind)


def _scatter(rows, cols, vals, shape):
    keep = (rows >= 0) & (cols >= 0)
    return sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=shape)


def conforming_embedding(broken: SpaceHandle, conf: SpaceHandle) -> sp.csr_matrix:
    """Broken coefficients of every global edge/face basis function.

    Works for both ``conforming-edge`` and ``div-conforming`` targets;
    returns a (broken.dim x conf.dim) matrix.
    """
    if broken.kind != "broken-vector" or conf.kind not in ("conforming-edge", "div-conforming"):
        raise SpaceError("expected broken-vector and an edge space")
    if broken.degree != conf.degree:
        raise SpaceError(
            f"degree mismatch: broken {broken.degree}, conforming {conf.degree}")
    T, nv, nl = conf.local.shape
    vals = conf.local * conf.cell_signs[:, None, :]
    rows = np.broadcast_to(broken.cell_dofs[:, :, None], (T, nv, nl))
    cols = np.broadcast_to(conf.cell_dofs[:, None, :], (T, nv, nl))
    return _scatter(rows.ravel(), cols.ravel(), vals.ravel(), (broken.dim, conf.dim))


def interpolation_matrix(conf: SpaceHandle, broken: SpaceHandle) -> sp.csr_matrix:
    """Left inverse of ``conforming_embedding``: applies the global DOF
    functionals to broken coefficients.  Shared DOFs average the values
    seen from both incident cells, which is exact on the conforming space.
    """
    if broken.degree != conf.degree:
        raise SpaceError("degree mismatch")
    T, nl, nv = conf.local_rows.shape
    vals = conf.local_rows * conf.cell_signs[:, :, None]
    rows = np.broadcast_to(conf.cell_dofs[:, :, None], (T, nl, nv))
    cols = np.broadcast_to(broken.cell_dofs[:, None, :], (T, nl, nv))
    S = _scatter(rows.ravel(), cols.ravel(), vals.ravel(), (conf.dim, broken.dim))
    counts = np.bincount(conf.cell_dofs[conf.cell_dofs >= 0], minlength=conf.dim)
    return sp.diags(1.0 / np.maximum(counts, 1)) @ S


def _modal_gradient_local(mesh, m):
    """Per-cell modal coefficients of the physical gradient of each P_m mode,
    expressed in vector P_{m-1}: (T, 2 nb(m-1), nb(m))."""
    rule = gauss_triangle(2 * m)
    val, _ = dubiner(m - 1, rule.xy)
    _, grad = dubiner(m, rule.xy)
    _, Jinv, _ = affine_data(mesh.cell_vertices)
    ref_mom = np.einsum("q,qa,qbi->abi", rule.weights, val, grad)
    # physical gradient = J^{-T} (reference gradient)
    out = np.einsum("tji,abj->tiab", Jinv, ref_mom)
    T = mesh.n_cells
    return out.reshape(T, 2 * val.shape[1], grad.shape[1])


def grad_embedding(scalar: SpaceHandle, vector: SpaceHandle) -> sp.csr_matrix:
    """Broken-vector coefficients of the element-wise gradient of broken
    scalar fields."""
    if scalar.kind != "broken-scalar" or vector.kind != "broken-vector":
        raise SpaceError("expected broken-scalar and broken-vector spaces")
    if vector.degree != scalar.degree - 1:
        raise SpaceError(
            f"gradient of P_{scalar.degree} needs vector degree {scalar.degree - 1}")
    loc = _modal_gradient_local(scalar.mesh, scalar.degree)
    T, nv, ns = loc.shape
    rows = np.broadcast_to(vector.cell_dofs[:, :, None], loc.shape)
    cols = np.broadcast_to(scalar.cell_dofs[:, None, :], loc.shape)
    return _scatter(rows.ravel(), cols.ravel(), loc.ravel(), (vector.dim, scalar.dim))


def continuous_to_broken(lag: SpaceHandle, scalar: SpaceHandle) -> sp.csr_matrix:
    """Broken modal coefficients of continuous Lagrange fields."""
    if lag.kind != "multiplier-lagrange" or scalar.kind != "broken-scalar":
        raise SpaceError("expected multiplier-lagrange and broken-scalar spaces")
    if scalar.degree != lag.degree:
        raise SpaceError("degree mismatch")
    C = lagrange_coefficients(lag.degree)
    T = lag.mesh.n_cells
    loc = np.broadcast_to(C, (T,) + C.shape)
    rows = np.broadcast_to(scalar.cell_dofs[:, :, None], loc.shape)
    cols = np.broadcast_to(lag.cell_dofs[:, None, :], loc.shape)
    # shared nodes would be summed; each (cell, node) pair appears once per cell
    return _scatter(rows.ravel(), cols.ravel(), np.ascontiguousarray(loc).ravel(),
                    (scalar.dim, lag.dim))


def rotation(vector: SpaceHandle) -> sp.csr_matrix:
    """Rotate broken vector fields: (v_x, v_y) -> (v_y, -v_x)."""
    nb = vector.local_dim // 2
    Rl = np.zeros((2 * nb, 2 * nb))
    Rl[:nb, nb:] = np.eye(nb)
    Rl[nb:, :nb] = -np.eye(nb)
    return sp.block_diag([Rl] * vector.mesh.n_cells, format="csr")


def curl_embedding(lag: SpaceHandle, vector: SpaceHandle) -> sp.csr_matrix:
    """Broken-vector coefficients of curl psi = (d_y psi, -d_x psi)."""
    scalar = build_space(lag.mesh, "broken-scalar", lag.degree)
    G = grad_embedding(scalar, vector)
    return (rotation(vector) @ G @ continuous_to_broken(lag, scalar)).tocsr()


def divergence_matrix(vector: SpaceHandle) -> tuple[sp.csr_matrix, SpaceHandle]:
    """Element-wise divergence of broken P_k vector fields as broken P_{k-1}
    modal coefficients."""
    k = vector.degree
    scalar = build_space(vector.mesh, "broken-scalar", max(k - 1, 0))
    if k == 0:
        return sp.csr_matrix((scalar.dim, vector.dim)), scalar
    rule = gauss_triangle(2 * k)
    val, _ = dubiner(k - 1, rule.xy)
    _, grad = dubiner(k, rule.xy)
    _, Jinv, _ = affine_data(vector.mesh.cell_vertices)
    ref_mom = np.einsum("q,qa,qbi->abi", rule.weights, val, grad)
    phys = np.einsum("tji,abj->tiab", Jinv, ref_mom)  # (T, comp, a, b)
    loc = np.concatenate([phys[:, 0], phys[:, 1]], axis=2)
    rows = np.broadcast_to(scalar.cell_dofs[:, :, None], loc.shape)
    cols = np.broadcast_to(vector.cell_dofs[:, None, :], loc.shape)
    return _scatter(rows.ravel(), cols.ravel(), loc.ravel(),
                    (scalar.dim, vector.dim)), scalar


def curl_matrix(vector: SpaceHandle) -> tuple[sp.csr_matrix, SpaceHandle]:
    """Element-wise scalar curl d_x v_y - d_y v_x of broken P_k vector
    fields as broken P_{k-1} modal coefficients."""
    k = vector.degree
    scalar = build_space(vector.mesh, "broken-scalar", max(k - 1, 0))
    if k == 0:
        return sp.csr_matrix((scalar.dim, vector.dim)), scalar
    rule = gauss_triangle(2 * k)
    val, _ = dubiner(k - 1, rule.xy)
    _, grad = dubiner(k, rule.xy)
    _, Jinv, _ = affine_data(vector.mesh.cell_vertices)
    ref_mom = np.einsum("q,qa,qbi->abi", rule.weights, val, grad)
    phys = np.einsum("tji,abj->tiab", Jinv, ref_mom)
    loc = np.concatenate([-phys[:, 1], phys[:, 0]], axis=2)
    rows = np.broadcast_to(scalar.cell_dofs[:, :, None], loc.shape)
    cols = np.broadcast_to(vector.cell_dofs[:, None, :], loc.shape)
    return _scatter(rows.ravel(), cols.ravel(), loc.ravel(),
                    (scalar.dim, vector.dim)), scalar


def degree_raise(low: SpaceHandle, high: SpaceHandle) -> sp.csr_matrix:
    """Embed a broken space into a broken space of higher degree.

    The modal basis is hierarchical, so this is zero padding per cell (and
    per vector component)."""
    if low.kind != high.kind or low.kind not in ("broken-vector", "broken-scalar"):
        raise SpaceError("degree_raise needs two broken spaces of the same kind")
    if high.degree < low.degree:
        raise SpaceError("target degree must not be lower")
    nl, nh = modal_dim(low.degree), modal_dim(high.degree)
    ncomp = 2 if low.kind == "broken-vector" else 1
    loc = np.zeros((ncomp * nh, ncomp * nl))
    for c in range(ncomp):
        loc[c * nh: c * nh + nl, c * nl: (c + 1) * nl] = np.eye(nl)
    return sp.block_diag([loc] * low.mesh.n_cells, format="csr")


def lagrange_boundary_dofs(lag: SpaceHandle) -> np.ndarray:
    """Boolean mask of the Lagrange DOFs located on the domain boundary."""
    if lag.kind != "multiplier-lagrange":
        raise SpaceError("expected a multiplier-lagrange space")
    mesh, m = lag.mesh, lag.degree
    mask = np.zeros(lag.dim, dtype=bool)
    mask[: mesh.n_vertices] = mesh.boundary_vertex
    edge_ids = np.flatnonzero(mesh.boundary_edge)
    if m > 1:
        cols = mesh.n_vertices + edge_ids[:, None] * (m - 1) + np.arange(m - 1)[None, :]
        mask[cols.ravel()] = True
    return mask
