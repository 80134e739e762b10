"""Reference-triangle quadrature and polynomial bases.

The reference triangle has vertices (0, 0), (1, 0), (0, 1).  Every basis
in this module is stored as a coefficient matrix over an orthonormal
Dubiner (modal) basis, which keeps tabulation well conditioned up to the
degrees used here.

Local edge ``i`` of a triangle is the edge opposite vertex ``i`` and is
traversed from vertex ``(i + 1) % 3`` to vertex ``(i + 2) % 3``.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np
from numpy.polynomial.legendre import leggauss, legval
from scipy.special import roots_jacobi

MAX_QUAD_DEGREE = 20

REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
LOCAL_EDGES = ((1, 2), (2, 0), (0, 1))

FAMILIES = ("lagrange", "vector", "edge-BDM", "div-BDM")
DEGREE_RANGE = {
    "lagrange": (0, 6),
    "vector": (0, 6),
    "edge-BDM": (1, 5),
    "div-BDM": (1, 5),
}


class UnsupportedDegree(ValueError):
    pass


def monomial_integral(a: int, b: int) -> float:
    """Exact integral of x**a * y**b over the reference triangle."""
    return factorial(a) * factorial(b) / factorial(a + b + 2)


# ---------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature on the reference triangle or the unit interval.

    ``points`` holds barycentric coordinates (3 columns on the triangle,
    2 on the interval).  Weights sum to the reference measure (1/2 or 1).
    """

    points: np.ndarray
    weights: np.ndarray
    exact_degree: int

    @property
    def xy(self) -> np.ndarray:
        """Cartesian reference coordinates (triangle) or parameter (interval)."""
        if self.points.shape[1] == 3:
            return self.points[:, 1:]
        return self.points[:, 1]


def _check_degree(degree):
    if not 0 <= degree <= MAX_QUAD_DEGREE:
        raise UnsupportedDegree(
            f"quadrature degree {degree} outside [0, {MAX_QUAD_DEGREE}]")


def gauss_triangle(degree: int) -> QuadratureRule:
    """Collapsed (Stroud conical) Gauss rule exact to ``degree``."""
    _check_degree(degree)
    n = degree // 2 + 1
    t, wj = roots_jacobi(n, 1.0, 0.0)
    s, wl = leggauss(n)
    u = 0.5 * (1.0 + t)
    v = 0.5 * (1.0 + s)
    U, V = np.meshgrid(u, v, indexing="ij")
    x = U.ravel()
    y = (V * (1.0 - U)).ravel()
    w = np.outer(wj / 4.0, wl / 2.0).ravel()
    bary = np.column_stack([1.0 - x - y, x, y])
    return QuadratureRule(bary, w, 2 * n - 1)


def gauss_interval(degree: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1] exact to ``degree``."""
    _check_degree(degree)
    n = degree // 2 + 1
    s, w = leggauss(n)
    t = 0.5 * (1.0 + s)
    return QuadratureRule(np.column_stack([1.0 - t, t]), 0.5 * w, 2 * n - 1)


def shifted_legendre(k: int, t) -> np.ndarray:
    """Legendre polynomials L_0..L_k on [0, 1], shape (len(t), k + 1)."""
    t = np.asarray(t, dtype=float)
    eye = np.eye(k + 1)
    return np.stack([legval(2.0 * t - 1.0, eye[j]) for j in range(k + 1)],
                    axis=-1)


# ---------------------------------------------------------------------------
# orthonormal modal basis


def modal_dim(n: int) -> int:
    return (n + 1) * (n + 2) // 2


def _idx(p, q):
    return (p + q) * (p + q + 1) // 2 + q


def _jrc(a, b, n):
    an = (2 * n + 1 + a + b) * (2 * n + 2 + a + b) / (2.0 * (n + 1) * (n + 1 + a + b))
    bn = ((a * a - b * b) * (2 * n + 1 + a + b)
          / (2.0 * (n + 1) * (2 * n + a + b) * (n + 1 + a + b)))
    cn = ((n + a) * (n + b) * (2 * n + 2 + a + b)
          / ((n + 1) * (n + 1 + a + b) * (2 * n + a + b)))
    return an, bn, cn


def dubiner(n: int, xy) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal polynomials of degree <= n on the reference triangle.

    Uses the singularity-free recurrence in Cartesian coordinates, so
    vertices and edge points are evaluated safely.  Ordering is
    hierarchical by total degree: the first ``modal_dim(m)`` functions
    span P_m for every m <= n.

    Returns
    -------
    values : (npts, nbasis)
    grads : (npts, nbasis, 2)
    """
    xy = np.atleast_2d(np.asarray(xy, dtype=float))
    x = 2.0 * xy[:, 0] - 1.0
    y = 2.0 * xy[:, 1] - 1.0
    nb = modal_dim(n)
    P = np.zeros((nb, len(x)))
    Px = np.zeros_like(P)
    Py = np.zeros_like(P)
    P[0] = 1.0
    f1 = 0.5 * (1.0 + 2.0 * x + y)
    f2 = 0.5 * (1.0 - y)
    f3 = f2 * f2
    if n > 0:
        P[_idx(1, 0)] = f1
        Px[_idx(1, 0)] = 1.0
        Py[_idx(1, 0)] = 0.5
    for p in range(1, n):
        a = (2 * p + 1) / (p + 1)
        b = p / (p + 1)
        i, j, k = _idx(p + 1, 0), _idx(p, 0), _idx(p - 1, 0)
        P[i] = a * f1 * P[j] - b * f3 * P[k]
        Px[i] = a * (f1 * Px[j] + P[j]) - b * f3 * Px[k]
        Py[i] = a * (f1 * Py[j] + 0.5 * P[j]) - b * (f3 * Py[k] - f2 * P[k])
    for p in range(n):
        i, j = _idx(p, 1), _idx(p, 0)
        g = 0.5 * (1 + 2 * p + (3 + 2 * p) * y)
        P[i] = P[j] * g
        Px[i] = Px[j] * g
        Py[i] = Py[j] * g + 0.5 * (3 + 2 * p) * P[j]
    for p in range(n - 1):
        for q in range(1, n - p):
            an, bn, cn = _jrc(2 * p + 1, 0, q)
            i, j, k = _idx(p, q + 1), _idx(p, q), _idx(p, q - 1)
            lin = an * y + bn
            P[i] = lin * P[j] - cn * P[k]
            Px[i] = lin * Px[j] - cn * Px[k]
            Py[i] = lin * Py[j] + an * P[j] - cn * Py[k]
    # factor 2 normalizes on the (0,1) triangle; the chain rule adds another 2
    scale = np.empty(nb)
    for p in range(n + 1):
        for q in range(n - p + 1):
            scale[_idx(p, q)] = 2.0 * np.sqrt((p + 0.5) * (p + q + 1))
    P *= scale[:, None]
    grads = np.stack([Px, Py], axis=-1) * (2.0 * scale[:, None, None])
    return P.T, grads.transpose(1, 0, 2)


# ---------------------------------------------------------------------------
# affine geometry


def affine_data(verts):
    """Jacobian, inverse and determinant for triangles ``verts`` (..., 3, 2)."""
    verts = np.asarray(verts, dtype=float)
    J = np.stack([verts[..., 1, :] - verts[..., 0, :],
                  verts[..., 2, :] - verts[..., 0, :]], axis=-1)
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    Jinv = np.empty_like(J)
    Jinv[..., 0, 0] = J[..., 1, 1]
    Jinv[..., 1, 1] = J[..., 0, 0]
    Jinv[..., 0, 1] = -J[..., 0, 1]
    Jinv[..., 1, 0] = -J[..., 1, 0]
    Jinv /= det[..., None, None]
    return J, Jinv, det


def to_reference(verts, x):
    """Pull physical points ``x`` (..., npts, 2) back to reference coordinates."""
    _, Jinv, _ = affine_data(verts)
    return np.einsum("...ij,...pj->...pi", Jinv, x - verts[..., None, 0, :])


def covariant_pushforward(J, vhat):
    """Map reference vectors by J^{-T}; preserves tangential traces."""
    return np.linalg.solve(np.swapaxes(J, -1, -2), vhat[..., None])[..., 0]


def contravariant_pushforward(J, vhat):
    """Map reference vectors by J / det J (Piola); preserves normal fluxes."""
    det = np.linalg.det(J)
    return (J @ vhat[..., None])[..., 0] / det[..., None]


def modal_tabulate(n, verts, x):
    """Physical values and gradients of the mapped modal basis.

    ``verts`` is (T, 3, 2) and ``x`` is (T, npts, 2); returns arrays of
    shape (T, npts, nb) and (T, npts, nb, 2).
    """
    _, Jinv, _ = affine_data(verts)
    ref = to_reference(verts, x)
    T, npts = ref.shape[:2]
    val, grad = dubiner(n, ref.reshape(-1, 2))
    val = val.reshape(T, npts, -1)
    grad = grad.reshape(T, npts, -1, 2)
    grad = np.einsum("tji,tpbj->tpbi", Jinv, grad)
    return val, grad


# ---------------------------------------------------------------------------
# finite element families


def lattice(m: int) -> np.ndarray:
    """Integer barycentric multi-indices of the degree-m Lagrange lattice."""
    if m == 0:
        return np.zeros((1, 3), dtype=int)
    out = []
    for j in range(m + 1):
        for i in range(m + 1 - j):
            out.append((m - i - j, i, j))
    return np.array(out, dtype=int)


def lagrange_nodes(m: int) -> np.ndarray:
    """Reference coordinates of the degree-m equispaced nodes."""
    if m == 0:
        return np.array([[1.0 / 3.0, 1.0 / 3.0]])
    return lattice(m)[:, 1:] / m


def lagrange_coefficients(m: int) -> np.ndarray:
    """Modal coefficients (modal_dim(m) x nnodes) of the nodal basis."""
    V, _ = dubiner(m, lagrange_nodes(m))
    return np.linalg.inv(V)


def edge_moment_rows(verts, k, kind, orient=None, modal_degree=None):
    """Edge-moment DOF functionals applied to the vector modal basis.

    Row ``(e, j)`` is int_0^1 (v . d_e) L_j(s) ds along edge ``e`` where
    ``d_e`` is the unit tangent (``kind='tangential'``) or the unit normal
    obtained by rotating the tangent clockwise (``kind='normal'``), and
    ``s`` runs along the edge in the direction given by ``orient``.

    ``orient`` is (T, 3) of +1/-1: +1 means the edge runs along the local
    traversal (i+1 -> i+2).  Defaults to +1.

    Returns (T, 3 * (k + 1), 2 * nb) where columns are the x-component
    modes followed by the y-component modes.
    """
    verts = np.asarray(verts, dtype=float)
    T = verts.shape[0]
    n = k if modal_degree is None else modal_degree
    if orient is None:
        orient = np.ones((T, 3))
    rule = gauss_interval(2 * n + 2)
    s = rule.xy
    L = shifted_legendre(k, s)
    rows = []
    for e, (a, b) in enumerate(LOCAL_EDGES):
        sgn = orient[:, e]
        start = np.where(sgn[:, None] > 0, verts[:, a], verts[:, b])
        end = np.where(sgn[:, None] > 0, verts[:, b], verts[:, a])
        d = end - start
        d = d / np.linalg.norm(d, axis=1)[:, None]
        if kind == "normal":
            d = np.column_stack([d[:, 1], -d[:, 0]])
        elif kind != "tangential":
            raise ValueError(kind)
        x = start[:, None, :] + s[None, :, None] * (end - start)[:, None, :]
        val, _ = modal_tabulate(n, verts, x)
        # (T, j, comp, mode)
        r = np.einsum("q,qj,tqb,tc->tjcb", rule.weights, L, val, d)
        rows.append(r.reshape(T, k + 1, -1))
    return np.concatenate(rows, axis=1)


def edge_element_coefficients(verts, k, kind, orient=None):
    """Local nodal bases for BDM-type edge elements on each triangle.

    Returns ``(coeffs, rows)`` where ``coeffs`` is (T, 2 nb, 2 nb): column
    ``i`` holds the vector-modal coefficients of the basis function dual to
    DOF ``i``.  The first ``3 (k + 1)`` DOFs are edge moments in local edge
    order; the rest are interior moments against an orthonormal basis of
    the vector polynomials with vanishing edge trace.  ``rows`` is the
    DOF matrix, the inverse of ``coeffs``.
    """
    E = edge_moment_rows(verts, k, kind, orient)
    ne = E.shape[1]
    _, _, Vt = np.linalg.svd(E)
    L = np.concatenate([E, Vt[:, ne:, :]], axis=1)
    return np.linalg.inv(L), L


@dataclass(frozen=True)
class BasisFamily:
    """A local polynomial basis on one triangle.

    ``coeffs`` maps the modal basis (scalar: nb rows; vector: 2 nb rows,
    x-modes first) to the basis functions (columns).
    """

    family: str
    degree: int
    vertices: np.ndarray
    coeffs: np.ndarray
    modal_degree: int
    n_edge_dofs: int = 0
    interior_rows: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.coeffs.shape[1]

    @property
    def is_vector(self) -> bool:
        return self.family != "lagrange"

    def _tab(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return modal_tabulate(self.modal_degree, self.vertices[None], x[None])

    def values(self, x) -> np.ndarray:
        """Scalar: (npts, dim).  Vector: (npts, dim, 2)."""
        val, _ = self._tab(x)
        val = val[0]
        if not self.is_vector:
            return val @ self.coeffs
        nb = val.shape[1]
        return np.stack([val @ self.coeffs[:nb], val @ self.coeffs[nb:]], axis=-1)

    def gradients(self, x) -> np.ndarray:
        """Gradients of a scalar basis, (npts, dim, 2)."""
        if self.is_vector:
            raise TypeError("gradients are defined for scalar families")
        _, grad = self._tab(x)
        return np.einsum("pbi,bd->pdi", grad[0], self.coeffs)

    def jacobians(self, x) -> np.ndarray:
        """d v_c / d x_i of a vector basis, (npts, dim, 2, 2)."""
        _, grad = self._tab(x)
        g = grad[0]
        nb = g.shape[1]
        return np.stack([np.einsum("pbi,bd->pdi", g, self.coeffs[:nb]),
                         np.einsum("pbi,bd->pdi", g, self.coeffs[nb:])], axis=2)

    def curls(self, x) -> np.ndarray:
        """Scalar curl dx v_y - dy v_x, (npts, dim)."""
        D = self.jacobians(x)
        return D[:, :, 1, 0] - D[:, :, 0, 1]

    def divergences(self, x) -> np.ndarray:
        D = self.jacobians(x)
        return D[:, :, 0, 0] + D[:, :, 1, 1]

    def dof_matrix(self) -> np.ndarray:
        """Apply the DOF functionals to every basis function.

        Functionals are evaluated by quadrature from point values, not from
        the coefficient construction, so unisolvence is checked
        independently.
        """
        if self.family == "lagrange":
            nodes = self.vertices[0] + lagrange_nodes(self.degree) @ affine_data(self.vertices)[0].T
            return self.values(nodes)
        if self.family == "vector":
            rule = gauss_triangle(2 * self.degree)
            x = self.vertices[0] + rule.xy @ affine_data(self.vertices)[0].T
            val, _ = self._tab(x)
            vals = self.values(x)
            # moments against the modal basis in each component, reference scaled
            return np.concatenate([
                np.einsum("q,qb,qd->bd", rule.weights, val[0], vals[..., 0]),
                np.einsum("q,qb,qd->bd", rule.weights, val[0], vals[..., 1])])
        return self._edge_dof_matrix()

    def _edge_dof_matrix(self):
        k = self.degree
        kind = "tangential" if self.family == "edge-BDM" else "normal"
        rule = gauss_interval(2 * k + 2)
        s = rule.xy
        L = shifted_legendre(k, s)
        rows = []
        for a, b in LOCAL_EDGES:
            va, vb = self.vertices[a], self.vertices[b]
            d = (vb - va) / np.linalg.norm(vb - va)
            if kind == "normal":
                d = np.array([d[1], -d[0]])
            x = va + s[:, None] * (vb - va)
            vals = self.values(x) @ d
            rows.append(np.einsum("q,qj,qd->jd", rule.weights, L, vals))
        # interior moments recovered from the bubble part of the construction
        nb = modal_dim(self.modal_degree)
        rule2 = gauss_triangle(2 * self.modal_degree)
        J, _, det = affine_data(self.vertices)
        x = self.vertices[0] + rule2.xy @ J.T
        val, _ = self._tab(x)
        vals = self.values(x)
        modal = np.concatenate([
            np.einsum("q,qb,qd->bd", rule2.weights, val[0], vals[..., 0]),
            np.einsum("q,qb,qd->bd", rule2.weights, val[0], vals[..., 1])])
        rows.append(self.interior_rows @ modal)
        return np.concatenate(rows, axis=0)


def make_basis(family: str, k: int, vertices=None) -> BasisFamily:
    """Build a local basis of the given family and degree.

    Parameters
    ----------
    family : {'lagrange', 'vector', 'edge-BDM', 'div-BDM'}
        'vector' is the full P_k^2 modal basis; 'edge-BDM' uses tangential
        edge moments (H(curl) conforming), 'div-BDM' normal edge moments.
    k : int
        Polynomial degree.
    vertices : (3, 2) array, optional
        Triangle to build on; defaults to the reference triangle.  Edges are
        oriented along the local counterclockwise traversal.
    """
    if family not in FAMILIES:
        raise UnsupportedDegree(f"unknown family {family!r}")
    lo, hi = DEGREE_RANGE[family]
    if not lo <= k <= hi:
        raise UnsupportedDegree(f"{family} degree {k} outside [{lo}, {hi}]")
    verts = REF_VERTICES.copy() if vertices is None else np.asarray(vertices, float)
    if family == "lagrange":
        return BasisFamily(family, k, verts, lagrange_coefficients(k), k)
    if family == "vector":
        return BasisFamily(family, k, verts, np.eye(2 * modal_dim(k)), k)
    kind = "tangential" if family == "edge-BDM" else "normal"
    coeffs, rows = edge_element_coefficients(verts[None], k, kind)
    ne = 3 * (k + 1)
    return BasisFamily(family, k, verts, coeffs[0], k, ne, rows[0, ne:])
