"""Assembly of the bilinear forms of the hybrid method.

Two-dimensional conventions: the scalar curl of a vector field is
d_x v_y - d_y v_x, the vector curl of a scalar is (d_y h, -d_x h), and the
coupling form is

    b(A', H) = - sum_K int_{dK} H (A' . t) ds,   t = (-n_y, n_x),

the out-of-plane reduction of - sum_K int_{dK} (A' x H e_z) . n.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh, edge_frames
from .refelem import (
    LOCAL_EDGES, affine_data, dubiner, gauss_interval, gauss_triangle,
    lagrange_coefficients, lagrange_nodes, modal_dim, to_reference,
)
from .spaces import (
    SpaceHandle, build_space, conforming_embedding, continuous_to_broken,
    curl_embedding, divergence_matrix, grad_embedding, interpolation_matrix,
)


class AssemblyError(ValueError):
    pass


def quad_degree(max_poly_degree: int) -> int:
    return 2 * max_poly_degree + 2


# ---------------------------------------------------------------------------
# tabulation helpers


@dataclass
class CellTab:
    """Modal values/gradients at mapped volume quadrature points."""

    x: np.ndarray        # (T, nq, 2) physical points
    w: np.ndarray        # (T, nq) physical weights
    val: np.ndarray      # (nq, nb)
    grad: np.ndarray     # (T, nq, nb, 2) physical gradients


def cell_tabulation(mesh: Mesh, n: int, degree: int) -> CellTab:
    rule = gauss_triangle(min(degree, 20))
    J, Jinv, det = affine_data(mesh.cell_vertices)
    x = mesh.cell_vertices[:, None, 0, :] + np.einsum("tij,qj->tqi", J, rule.xy)
    val, grad = dubiner(n, rule.xy)
    pgrad = np.einsum("tji,qbj->tqbi", Jinv, grad)
    return CellTab(x, np.abs(det)[:, None] * rule.weights[None, :], val, pgrad)


@dataclass
class EdgeTab:
    """Modal values at Gauss points on each local edge of each cell."""

    x: np.ndarray        # (T, 3, nq, 2)
    w: np.ndarray        # (T, 3, nq) physical weights (length included)
    ref: np.ndarray      # (T, 3, nq, 2) reference coordinates
    normal: np.ndarray   # (T, 3, 2) outward unit normal
    tangent: np.ndarray  # (T, 3, 2)


def edge_tabulation(mesh: Mesh, degree: int) -> EdgeTab:
    rule = gauss_interval(min(degree, 20))
    s = rule.xy
    verts = mesh.cell_vertices
    n, t, lengths = edge_frames(verts)
    xs = []
    for a, b in LOCAL_EDGES:
        xs.append(verts[:, None, a, :] + s[None, :, None] * (verts[:, b] - verts[:, a])[:, None, :])
    x = np.stack(xs, axis=1)
    T = mesh.n_cells
    ref = to_reference(verts, x.reshape(T, -1, 2)).reshape(x.shape)
    return EdgeTab(x, lengths[..., None] * rule.weights[None, None, :], ref, n, t)


def _modal_at(n, pts):
    shape = pts.shape[:-1]
    val, grad = dubiner(n, pts.reshape(-1, 2))
    return val.reshape(shape + (-1,)), grad.reshape(shape + (-1, 2))


def _vector_values(val):
    """Expand scalar modal values (..., nb) to vector modes (..., 2 nb, 2)."""
    nb = val.shape[-1]
    out = np.zeros(val.shape[:-1] + (2 * nb, 2))
    out[..., :nb, 0] = val
    out[..., nb:, 1] = val
    return out


def _vector_curls(grad):
    """Scalar curls of vector modes from scalar modal gradients (..., nb, 2)."""
    return np.concatenate([-grad[..., 1], grad[..., 0]], axis=-1)


def _block(loc, rows, cols, shape):
    R = np.broadcast_to(rows[:, :, None], loc.shape).ravel()
    C = np.broadcast_to(cols[:, None, :], loc.shape).ravel()
    v = np.ascontiguousarray(loc).ravel()
    keep = (R >= 0) & (C >= 0)
    return sp.csr_matrix((v[keep], (R[keep], C[keep])), shape=shape)


# ---------------------------------------------------------------------------
# individual forms


def mass_matrix(space: SpaceHandle, weight: float = 1.0) -> sp.csr_matrix:
    """L2 mass matrix of a broken vector or scalar space (block diagonal)."""
    mesh = space.mesh
    tab = cell_tabulation(mesh, space.degree, quad_degree(space.degree))
    if space.kind == "broken-vector":
        v = _vector_values(tab.val)
        loc = np.einsum("tq,qai,qbi->tab", tab.w, v, v)
    elif space.kind == "broken-scalar":
        loc = np.einsum("tq,qa,qb->tab", tab.w, tab.val, tab.val)
    else:
        raise AssemblyError(f"mass_matrix: unsupported space {space.kind}")
    return _block(weight * loc, space.cell_dofs, space.cell_dofs, (space.dim, space.dim))


def curl_curl_matrix(space: SpaceHandle, mu: float = 1.0) -> sp.csr_matrix:
    """a(A, A') = sum_K int_K mu^-1 curl A curl A' on a broken vector space."""
    tab = cell_tabulation(space.mesh, space.degree, quad_degree(space.degree))
    c = _vector_curls(tab.grad)
    loc = np.einsum("tq,tqa,tqb->tab", tab.w, c, c) / mu
    return _block(loc, space.cell_dofs, space.cell_dofs, (space.dim, space.dim))


def _lagrange_local(m, pts):
    C = lagrange_coefficients(m)
    val, grad = _modal_at(m, pts)
    return val @ C, np.einsum("...bi,bn->...ni", grad, C)


def coupling_matrix(vector: SpaceHandle, lag: SpaceHandle) -> sp.csr_matrix:
    """b(A', H) between broken vectors (rows) and multipliers (columns)."""
    if vector.mesh is not lag.mesh:
        raise AssemblyError("spaces live on different meshes")
    et = edge_tabulation(vector.mesh, quad_degree(max(vector.degree, lag.degree)))
    val, _ = _modal_at(vector.degree, et.ref)                 # (T,3,q,nb)
    psi, _ = _lagrange_local(lag.degree, et.ref)              # (T,3,q,nl)
    vt = np.concatenate([val * et.tangent[:, :, None, 0:1],
                         val * et.tangent[:, :, None, 1:2]], axis=-1)
    loc = -np.einsum("teq,teqa,teqb->tab", et.w, vt, psi)
    return _block(loc, vector.cell_dofs, lag.cell_dofs, (vector.dim, lag.dim))


def lagrange_matrices(lag: SpaceHandle) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Mass and stiffness (grad-grad) matrices of the multiplier space."""
    m = lag.degree
    rule = gauss_triangle(quad_degree(m))
    _, Jinv, det = affine_data(lag.mesh.cell_vertices)
    psi, dpsi = _lagrange_local(m, rule.xy)
    w = np.abs(det)[:, None] * rule.weights[None, :]
    g = np.einsum("tji,qnj->tqni", Jinv, dpsi)
    Ml = np.einsum("tq,qa,qb->tab", w, psi, psi)
    Kl = np.einsum("tq,tqai,tqbi->tab", w, g, g)
    shape = (lag.dim, lag.dim)
    return (_block(Ml, lag.cell_dofs, lag.cell_dofs, shape),
            _block(Kl, lag.cell_dofs, lag.cell_dofs, shape))


def lagrange_curl_cross(lag: SpaceHandle, vector: SpaceHandle):
    """Cross matrices against the multiplier space, both (lag x vector):

    ``Hx[j, i] = int psi_j curl(phi_i)`` and
    ``Dx[j, i] = int phi_i . curl(psi_j)``.
    """
    m, k = lag.degree, vector.degree
    tab = cell_tabulation(lag.mesh, k, quad_degree(max(m, k)))
    rule = gauss_triangle(quad_degree(max(m, k)))
    _, Jinv, _ = affine_data(lag.mesh.cell_vertices)
    psi, dpsi = _lagrange_local(m, rule.xy)
    g = np.einsum("tji,qnj->tqni", Jinv, dpsi)
    curl_psi = np.stack([g[..., 1], -g[..., 0]], axis=-1)     # (T,q,nl,2)
    c = _vector_curls(tab.grad)                               # (T,q,2nb)
    v = _vector_values(tab.val)                               # (q,2nb,2)
    Hl = np.einsum("tq,qa,tqb->tab", tab.w, psi, c)
    Dl = np.einsum("tq,tqai,qbi->tab", tab.w, curl_psi, v)
    shape = (lag.dim, vector.dim)
    return (_block(Hl, lag.cell_dofs, vector.cell_dofs, shape),
            _block(Dl, lag.cell_dofs, vector.cell_dofs, shape))


def normal_trace_matrix(scalar: SpaceHandle, vector: SpaceHandle) -> sp.csr_matrix:
    """``N[a, b] = sum_K int_{dK} phi_a (psi_b . n)`` between a broken
    scalar space and a broken vector space."""
    et = edge_tabulation(scalar.mesh, quad_degree(max(scalar.degree, vector.degree)))
    phi, _ = _modal_at(scalar.degree, et.ref)
    val, _ = _modal_at(vector.degree, et.ref)
    vn = np.concatenate([val * et.normal[:, :, None, 0:1],
                         val * et.normal[:, :, None, 1:2]], axis=-1)
    loc = np.einsum("teq,teqa,teqb->tab", et.w, phi, vn)
    return _block(loc, scalar.cell_dofs, vector.cell_dofs, (scalar.dim, vector.dim))


def assemble_constraint_form(scalar: SpaceHandle, div: SpaceHandle) -> sp.csr_matrix:
    """beta(phi', D) = sum_K int_{dK} phi' D . n, shape (scalar.dim, div.dim)."""
    if scalar.mesh is not div.mesh:
        raise AssemblyError("spaces live on different meshes")
    if div.kind != "div-conforming":
        raise AssemblyError("second argument must be a div-conforming space")
    vec = build_space(div.mesh, "broken-vector", div.degree)
    return (normal_trace_matrix(scalar, vec) @ conforming_embedding(vec, div)).tocsr()


# ---------------------------------------------------------------------------
# loads and projections


def vector_load(space: SpaceHandle, f, degree: int | None = None) -> np.ndarray:
    """``int f . phi_i`` for a vector callback ``f(x, y) -> (fx, fy)``."""
    deg = quad_degree(space.degree) + 4 if degree is None else degree
    tab = cell_tabulation(space.mesh, space.degree, deg)
    fx, fy = f(tab.x[..., 0], tab.x[..., 1])
    fx = np.broadcast_to(fx, tab.w.shape)
    fy = np.broadcast_to(fy, tab.w.shape)
    loc = np.concatenate([np.einsum("tq,tq,qa->ta", tab.w, fx, tab.val),
                          np.einsum("tq,tq,qa->ta", tab.w, fy, tab.val)], axis=1)
    return np.bincount(space.cell_dofs.ravel(), loc.ravel(), minlength=space.dim)


def scalar_load(space: SpaceHandle, f, degree: int | None = None) -> np.ndarray:
    """``int f phi_i`` for a scalar callback on a broken scalar space."""
    deg = quad_degree(space.degree) + 4 if degree is None else degree
    tab = cell_tabulation(space.mesh, space.degree, deg)
    fv = np.broadcast_to(f(tab.x[..., 0], tab.x[..., 1]), tab.w.shape)
    loc = np.einsum("tq,tq,qa->ta", tab.w, fv, tab.val)
    return np.bincount(space.cell_dofs.ravel(), loc.ravel(), minlength=space.dim)


def lagrange_curl_load(lag: SpaceHandle, f, degree: int | None = None) -> np.ndarray:
    """``int f . curl psi_j`` for a vector callback."""
    m = lag.degree
    rule = gauss_triangle(min(quad_degree(m) + 4 if degree is None else degree, 20))
    J, Jinv, det = affine_data(lag.mesh.cell_vertices)
    x = lag.mesh.cell_vertices[:, None, 0, :] + np.einsum("tij,qj->tqi", J, rule.xy)
    _, dpsi = _lagrange_local(m, rule.xy)
    g = np.einsum("tji,qnj->tqni", Jinv, dpsi)
    fx, fy = f(x[..., 0], x[..., 1])
    w = np.abs(det)[:, None] * rule.weights
    loc = np.einsum("tq,tqn->tn", w * np.broadcast_to(fx, w.shape), g[..., 1]) \
        - np.einsum("tq,tqn->tn", w * np.broadcast_to(fy, w.shape), g[..., 0])
    return np.bincount(lag.cell_dofs.ravel(), loc.ravel(), minlength=lag.dim)


def project_field(f, space: SpaceHandle, degree: int | None = None) -> np.ndarray:
    """L2 projection of an analytic vector (or scalar) field onto a broken space.

    The modal basis is orthonormal on the reference cell, so the mass
    matrix is |det J| times the identity on each cell and the projection
    is a scaled load vector.
    """
    if space.kind == "broken-vector":
        load = vector_load(space, f, degree)
    elif space.kind == "broken-scalar":
        load = scalar_load(space, f, degree)
    else:
        raise AssemblyError(f"project_field: unsupported space {space.kind}")
    det = 2.0 * space.mesh.areas
    return load / np.repeat(det, space.local_dim)


def nodal_interpolant(f, space: SpaceHandle) -> np.ndarray:
    """Element-wise Lagrange interpolant at the equispaced nodes of the
    space degree, returned as broken modal coefficients."""
    if space.kind not in ("broken-vector", "broken-scalar"):
        raise AssemblyError(f"nodal_interpolant: unsupported space {space.kind}")
    d = space.degree
    verts = space.mesh.cell_vertices
    J, _, _ = affine_data(verts)
    x = verts[:, None, 0, :] + np.einsum("tij,qj->tqi", J, lagrange_nodes(d))
    C = lagrange_coefficients(d)
    out = f(x[..., 0], x[..., 1])
    if space.kind == "broken-scalar":
        return (np.broadcast_to(out, x.shape[:2]) @ C.T).ravel()
    fx, fy = (np.broadcast_to(c, x.shape[:2]) for c in out)
    return np.concatenate([fx @ C.T, fy @ C.T], axis=1).ravel()


def interpolate_div(f, div: SpaceHandle, degree: int | None = None) -> np.ndarray:
    """Canonical interpolant of a vector callback in a div-conforming space.

    Edge DOFs are the exact normal moments of ``f``; interior DOFs are
    taken from the broken L2 projection onto the same polynomial degree.
    For polynomial ``f`` of that degree the result reproduces ``f``.
    """
    k = div.degree
    mesh = div.mesh
    vec = build_space(mesh, "broken-vector", k)
    coef = project_field(f, vec, degree)
    out = interpolation_matrix(div, vec) @ coef
    rule = gauss_interval(min(2 * k + 8, 20))
    s = rule.xy
    from .refelem import shifted_legendre
    L = shifted_legendre(k, s)
    p0 = mesh.vertices[mesh.edges[:, 0]]
    p1 = mesh.vertices[mesh.edges[:, 1]]
    x = p0[:, None, :] + s[None, :, None] * (p1 - p0)[:, None, :]
    d = (p1 - p0) / mesh.edge_lengths[:, None]
    nu = np.column_stack([d[:, 1], -d[:, 0]])
    fx, fy = f(x[..., 0], x[..., 1])
    fn = np.broadcast_to(fx, x.shape[:2]) * nu[:, None, 0] + np.broadcast_to(fy, x.shape[:2]) * nu[:, None, 1]
    mom = np.einsum("q,eq,qj->ej", rule.weights, fn, L)
    out[: mesh.n_edges * (k + 1)] = mom.ravel()
    return out


# ---------------------------------------------------------------------------
# the full system


@dataclass(eq=False)
class SystemMatrices:
    """All operators of the hybrid method for one mesh and degree.

    ``r`` is the method degree: broken vector fields have degree r - 1,
    broken scalars (charge test functions) degree r, and the multiplier
    degree ``m`` defaults to r + 1 (conforming).  ``D_hat`` lives in the
    div-conforming BDM space of degree m - 1, which contains curl of every
    multiplier.
    """

    mesh: Mesh
    r: int
    m: int
    eps: float
    mu: float
    V1: SpaceHandle
    V0: SpaceHandle
    Vhat: SpaceHandle
    conf: SpaceHandle
    div: SpaceHandle
    divvec: SpaceHandle
    M: sp.csr_matrix
    M_plain: sp.csr_matrix
    A: sp.csr_matrix
    B: sp.csr_matrix
    G: sp.csr_matrix
    P: sp.csr_matrix
    Mhat: sp.csr_matrix
    Khat: sp.csr_matrix
    Hcross: sp.csr_matrix
    Dcross: sp.csr_matrix
    Pdiv: sp.csr_matrix
    Idiv: sp.csr_matrix
    CurlDiv: sp.csr_matrix
    Div: sp.csr_matrix
    divscalar: SpaceHandle
    Beta: sp.csr_matrix
    extras: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return self.r - 1

    @property
    def conforming(self) -> bool:
        return self.m >= self.r + 1


def assemble(mesh: Mesh, r: int, m: int | None = None, eps: float = 1.0,
             mu: float = 1.0) -> SystemMatrices:
    """Assemble every matrix needed by the time- and frequency-domain drivers.

    Parameters
    ----------
    mesh : Mesh
    r : int
        Method degree (2..5); broken vector fields have degree r - 1.
    m : int, optional
        Multiplier (continuous Lagrange) degree, default r + 1.
    eps, mu : float
        Positive scalar material constants.
    """
    if eps <= 0 or mu <= 0:
        raise AssemblyError("eps and mu must be positive")
    if not 2 <= r <= 5:
        raise AssemblyError(f"degree r={r} outside supported range 2..5")
    m = r + 1 if m is None else m
    k = r - 1
    V1 = build_space(mesh, "broken-vector", k)
    V0 = build_space(mesh, "broken-scalar", r)
    Vhat = build_space(mesh, "multiplier-lagrange", m)
    conf = build_space(mesh, "conforming-edge", k)
    div = build_space(mesh, "div-conforming", m - 1)
    divvec = build_space(mesh, "broken-vector", m - 1)

    M_plain = mass_matrix(V1)
    A = curl_curl_matrix(V1, mu)
    B = coupling_matrix(V1, Vhat)
    G = grad_embedding(V0, V1)
    P = conforming_embedding(V1, conf)
    Mhat, Khat = lagrange_matrices(Vhat)
    Hcross, Dcross = lagrange_curl_cross(Vhat, V1)
    Pdiv = conforming_embedding(divvec, div)
    Idiv = interpolation_matrix(div, divvec)
    CurlDiv = (Idiv @ curl_embedding(Vhat, divvec)).tocsr()
    Div, divscalar = divergence_matrix(divvec)
    Beta = assemble_constraint_form(V0, div)
    return SystemMatrices(mesh, r, m, eps, mu, V1, V0, Vhat, conf, div, divvec,
                          (eps * M_plain).tocsr(), M_plain, A, B, G, P, Mhat, Khat,
                          Hcross, Dcross, Pdiv, Idiv, CurlDiv, Div, divscalar, Beta)
