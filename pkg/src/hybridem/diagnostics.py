"""Norms, seminorms, constraint residuals and convergence rates."""
from __future__ import annotations

from dataclasses import dataclass, field
from math import log2

import numpy as np

from .assembly import SystemMatrices, cell_tabulation, scalar_load
from .spaces import (
    FieldCoefficients, SpaceHandle, build_space, conforming_embedding,
    continuous_to_broken, divergence_matrix,
)


class DiagnosticError(ValueError):
    pass


def to_broken(fc: FieldCoefficients) -> tuple[SpaceHandle, np.ndarray]:
    """Express any field as coefficients of the matching broken space."""
    s = fc.space
    if s.kind in ("broken-vector", "broken-scalar"):
        return s, fc.values
    if s.kind == "multiplier-lagrange":
        b = build_space(s.mesh, "broken-scalar", s.degree)
        return b, continuous_to_broken(s, b) @ fc.values
    b = build_space(s.mesh, "broken-vector", s.degree)
    return b, conforming_embedding(b, s) @ fc.values


def _cell_values(space, coeffs, tab):
    c = coeffs.reshape(space.mesh.n_cells, -1)
    if space.kind == "broken-scalar":
        return np.einsum("qa,ta->tq", tab.val, c)
    nb = c.shape[1] // 2
    return np.stack([np.einsum("qa,ta->tq", tab.val, c[:, :nb]),
                     np.einsum("qa,ta->tq", tab.val, c[:, nb:])], axis=-1)


def evaluate(fc: FieldCoefficients, quad_degree: int):
    """Values at the mapped quadrature points of a rule of ``quad_degree``.

    Returns ``(values, tab)``: values are (T, nq) for scalar fields and
    (T, nq, 2) for vector fields; ``tab`` carries points and weights.
    """
    space, coeffs = to_broken(fc)
    tab = cell_tabulation(space.mesh, space.degree, quad_degree)
    return _cell_values(space, coeffs, tab), tab


def l2_error(fc: FieldCoefficients, f, quad_degree: int) -> float:
    """L2 norm of (field - f) by quadrature; ``f(x, y)`` returns a scalar
    array or a pair of component arrays."""
    vals, tab = evaluate(fc, quad_degree)
    ex = f(tab.x[..., 0], tab.x[..., 1])
    if vals.ndim == 3:
        ex = np.stack([np.broadcast_to(e, tab.w.shape) for e in ex], axis=-1)
        diff2 = np.sum((vals - ex) ** 2, axis=-1)
    else:
        diff2 = (vals - np.broadcast_to(ex, tab.w.shape)) ** 2
    return float(np.sqrt(np.sum(tab.w * diff2)))


def l2_distance(a: FieldCoefficients, b: FieldCoefficients, quad_degree: int) -> float:
    """L2 norm of the difference of two fields on the same mesh."""
    va, tab = evaluate(a, quad_degree)
    vb, _ = evaluate(b, quad_degree)
    if va.shape != vb.shape:
        raise DiagnosticError("fields have different value shapes")
    d2 = (va - vb) ** 2
    if d2.ndim == 3:
        d2 = d2.sum(axis=-1)
    return float(np.sqrt(np.sum(tab.w * d2)))


def l2_norm(fc: FieldCoefficients, quad_degree: int) -> float:
    vals, tab = evaluate(fc, quad_degree)
    sq = np.sum(vals ** 2, axis=-1) if vals.ndim == 3 else vals ** 2
    return float(np.sqrt(np.sum(tab.w * sq)))


def eoc(err_coarse: float, err_fine: float) -> float:
    """Experimental order of convergence under mesh halving."""
    return log2(err_coarse / err_fine)


def elementwise_divergence(fc: FieldCoefficients) -> FieldCoefficients:
    space, coeffs = to_broken(fc)
    if space.kind != "broken-vector":
        raise DiagnosticError("divergence needs a vector field")
    D, scalar = divergence_matrix(space)
    return FieldCoefficients(scalar, D @ coeffs)


def hdiv_seminorm(fc: FieldCoefficients) -> float:
    """sqrt(sum_K ||div v||_{L2(K)}^2) with the element-wise divergence.

    The divergence is expanded exactly in the orthonormal modal basis, whose
    mass matrix is |det J| times the identity on each cell.
    """
    d = elementwise_divergence(fc)
    c = d.values.reshape(d.space.mesh.n_cells, -1)
    det = 2.0 * d.space.mesh.areas
    return float(np.sqrt(np.sum(det * np.sum(c * c, axis=1))))


def constraint_residual(S: SystemMatrices, D, Dhat, rho=None) -> float:
    """Max over cells and the broken P_r basis of

        int_K (grad phi . D + phi rho) - int_{dK} phi Dhat . n

    where ``D`` are broken-vector coefficients and ``Dhat`` div-conforming
    coefficients; ``rho(x, y)`` defaults to zero.
    """
    lhs = S.G.T @ (S.M_plain @ D) - S.Beta @ Dhat
    if rho is not None:
        lhs = lhs + scalar_load(S.V0, rho)
    return float(np.abs(lhs).max()) if lhs.size else 0.0


def flux_residual(S: SystemMatrices, Dhat, rho=None) -> np.ndarray:
    """Per cell |int_{dK} Dhat . n - int_K rho|."""
    # first modal function is constant sqrt(2) on the reference cell
    T = S.mesh.n_cells
    flux = (S.Beta @ Dhat).reshape(T, -1)[:, 0] / np.sqrt(2.0)
    if rho is None:
        return np.abs(flux)
    q = scalar_load(build_space(S.mesh, "broken-scalar", 0), rho) / np.sqrt(2.0)
    return np.abs(flux - q)


def discrete_energy(S: SystemMatrices, A, D) -> float:
    """1/2 eps^-1 ||D||^2 + 1/2 mu^-1 ||curl A||^2."""
    return 0.5 * (D @ (S.M_plain @ D)) / S.eps + 0.5 * (A @ (S.A @ A))


@dataclass
class DiagnosticRecord:
    """Named nonnegative metrics; NaN aborts with context."""

    values: dict = field(default_factory=dict)

    def __setitem__(self, key, value):
        value = float(value)
        if np.isnan(value):
            raise DiagnosticError(f"metric {key!r} is NaN")
        if value < 0:
            raise DiagnosticError(f"metric {key!r} is negative: {value}")
        self.values[key] = value

    def __getitem__(self, key):
        return self.values[key]
