import numpy as np
import pytest

from hybridem.assembly import project_field
from hybridem.mesh import generate_uniform_grid
from hybridem.refelem import modal_tabulate
from hybridem.spaces import (
    FieldCoefficients, SpaceError, build_space, conforming_embedding, continuous_to_broken,
    curl_embedding, curl_matrix, degree_raise, divergence_matrix, grad_embedding,
    interpolation_matrix, lagrange_boundary_dofs,
)


def point_values(space, coeffs, cell, x):
    """Values of a broken field in ``cell`` at physical points ``x``."""
    mesh = space.mesh
    val, _ = modal_tabulate(space.degree, mesh.cell_vertices[cell][None], x[None])
    c = coeffs[space.cell_dofs[cell]]
    if space.kind == "broken-scalar":
        return val[0] @ c
    nb = len(c) // 2
    return np.column_stack([val[0] @ c[:nb], val[0] @ c[nb:]])


def edge_points(mesh, e, n=5):
    p0, p1 = mesh.vertices[mesh.edges[e]]
    s = np.linspace(0.1, 0.9, n)[:, None]
    return p0 + s * (p1 - p0), p1 - p0


@pytest.fixture(scope="module")
def mesh():
    return generate_uniform_grid(3)


def test_dimensions(mesh):
    E, T = mesh.n_edges, mesh.n_cells
    nb = E - mesh.boundary_edge.sum()
    assert build_space(mesh, "broken-vector", 2).dim == T * 12
    assert build_space(mesh, "broken-scalar", 3).dim == T * 10
    assert build_space(mesh, "multiplier-lagrange", 3).dim == mesh.n_vertices + 2 * E + T
    assert build_space(mesh, "conforming-edge", 1).dim == 2 * nb
    assert build_space(mesh, "div-conforming", 2).dim == 3 * E + 3 * T


def test_build_space_errors(mesh):
    with pytest.raises(SpaceError):
        build_space(mesh, "raviart-thomas", 1)
    with pytest.raises(SpaceError):
        build_space(mesh, "conforming-edge", 6)
    with pytest.raises(SpaceError):
        FieldCoefficients(build_space(mesh, "broken-scalar", 1), np.zeros(3))


@pytest.mark.parametrize("k", [1, 2, 4])
@pytest.mark.parametrize("kind", ["conforming-edge", "div-conforming"])
def test_trace_continuity(mesh, k, kind):
    broken = build_space(mesh, "broken-vector", k)
    conf = build_space(mesh, kind, k)
    v = conforming_embedding(broken, conf) @ np.random.default_rng(k).standard_normal(conf.dim)
    for e in range(mesh.n_edges):
        x, d = edge_points(mesh, e)
        if kind == "div-conforming":
            d = np.array([d[1], -d[0]])
        c0, c1 = mesh.edge_cells[e]
        tr0 = point_values(broken, v, c0, x) @ d
        if c1 >= 0:
            assert np.abs(tr0 - point_values(broken, v, c1, x) @ d).max() < 1e-11
        elif kind == "conforming-edge":
            assert np.abs(tr0).max() < 1e-11


@pytest.mark.parametrize("kind", ["conforming-edge", "div-conforming"])
def test_interpolation_is_left_inverse(mesh, kind):
    broken = build_space(mesh, "broken-vector", 2)
    conf = build_space(mesh, kind, 2)
    P = conforming_embedding(broken, conf)
    Ii = interpolation_matrix(conf, broken)
    assert abs(Ii @ P - np.eye(conf.dim)).max() < 1e-12


def test_interpolation_reproduces_polynomial(mesh):
    broken = build_space(mesh, "broken-vector", 2)
    div = build_space(mesh, "div-conforming", 2)
    f = project_field(lambda x, y: (x * y, 1 - y * y), broken)
    g = conforming_embedding(broken, div) @ (interpolation_matrix(div, broken) @ f)
    assert np.abs(f - g).max() < 1e-12


def test_lagrange_continuity_and_boundary(mesh):
    lag = build_space(mesh, "multiplier-lagrange", 3)
    sc = build_space(mesh, "broken-scalar", 3)
    h = np.random.default_rng(0).standard_normal(lag.dim)
    b = continuous_to_broken(lag, sc) @ h
    for e in np.flatnonzero(~mesh.boundary_edge):
        x, _ = edge_points(mesh, e)
        c0, c1 = mesh.edge_cells[e]
        assert np.abs(point_values(sc, b, c0, x) - point_values(sc, b, c1, x)).max() < 1e-11
    mask = lagrange_boundary_dofs(lag)
    assert mask.sum() == 4 * 3 * 3   # 3 DOFs per boundary edge (2 inner + 1 vertex)
    h[~mask] = 0.0
    b = continuous_to_broken(lag, sc) @ h
    h[mask] = 0.0
    b0 = continuous_to_broken(lag, sc) @ np.where(mask, 0.0, 1.0)
    for e in np.flatnonzero(mesh.boundary_edge):
        x, _ = edge_points(mesh, e)
        assert np.abs(point_values(sc, b0, mesh.edge_cells[e, 0], x)).max() < 1e-11


def test_grad_and_curl_embeddings_exact(mesh):
    sc = build_space(mesh, "broken-scalar", 3)
    vec = build_space(mesh, "broken-vector", 2)
    f = project_field(lambda x, y: x ** 3 - x * y * y + 2 * y, sc)
    g = grad_embedding(sc, vec) @ f
    exact = project_field(lambda x, y: (3 * x * x - y * y, -2 * x * y + 2), vec)
    assert np.abs(g - exact).max() < 1e-11

    lag = build_space(mesh, "multiplier-lagrange", 3)
    h = np.random.default_rng(1).standard_normal(lag.dim)
    c = curl_embedding(lag, vec) @ h
    gr = grad_embedding(sc, vec) @ (continuous_to_broken(lag, sc) @ h)
    nb = vec.local_dim // 2
    gr = gr.reshape(-1, 2, nb)
    assert np.allclose(c.reshape(-1, 2, nb), np.stack([gr[:, 1], -gr[:, 0]], axis=1))


def test_grad_embedding_degree_check(mesh):
    with pytest.raises(SpaceError):
        grad_embedding(build_space(mesh, "broken-scalar", 3), build_space(mesh, "broken-vector", 1))


def test_divergence_and_curl_matrices(mesh):
    vec = build_space(mesh, "broken-vector", 2)
    v = project_field(lambda x, y: (x * y, x - y * y), vec)
    D, s = divergence_matrix(vec)
    C, s2 = curl_matrix(vec)
    assert s.degree == 1 and s2.degree == 1
    assert np.abs(D @ v - project_field(lambda x, y: -y + 0 * x, s)).max() < 1e-11
    assert np.abs(C @ v - project_field(lambda x, y: 1 - x + 0 * y, s2)).max() < 1e-11


def test_degree_raise_preserves_field(mesh):
    lo = build_space(mesh, "broken-vector", 1)
    hi = build_space(mesh, "broken-vector", 3)
    v = project_field(lambda x, y: (x - 2 * y, 3 + y), lo)
    assert np.abs(degree_raise(lo, hi) @ v - project_field(lambda x, y: (x - 2 * y, 3 + y), hi)).max() < 1e-12
    with pytest.raises(SpaceError):
        degree_raise(hi, lo)
