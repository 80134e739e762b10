from math import pi

import numpy as np
import pytest

from hybridem.mesh import Mesh, MeshError, edge_frames, generate_uniform_grid, geometry


@pytest.mark.parametrize("N", [1, 2, 3, 8, 16])
def test_uniform_grid_counts(N):
    m = generate_uniform_grid(N)
    assert m.n_vertices == (N + 1) ** 2
    assert m.n_cells == 2 * N * N
    assert m.n_edges == 3 * N * N + 2 * N
    assert m.boundary_edge.sum() == 4 * N


def test_sixteen_grid_has_512_cells():
    assert generate_uniform_grid(16).n_cells == 512


def test_orientation_and_area():
    m = generate_uniform_grid(4)
    assert np.all(m.areas > 0)
    assert np.isclose(m.areas.sum(), pi * pi)
    # every interior edge is shared by exactly two cells
    assert np.all((m.edge_cells[:, 1] >= 0) == ~m.boundary_edge)


def test_diagonal_runs_lower_left_to_upper_right():
    m = generate_uniform_grid(1, ((0, 1), (0, 1)))
    assert m.edges[~m.boundary_edge].tolist() == [[0, 3]]


def test_edge_signs_match_global_orientation():
    m = generate_uniform_grid(3)
    for t in range(m.n_cells):
        tri = m.triangles[t]
        for i, (a, b) in enumerate(((1, 2), (2, 0), (0, 1))):
            e = m.edges[m.cell_edges[t, i]]
            assert set(e) == {tri[a], tri[b]}
            assert m.cell_edge_signs[t, i] == (1.0 if tri[a] < tri[b] else -1.0)


def test_arrays_are_read_only():
    m = generate_uniform_grid(2)
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 1.0


def test_invalid_input():
    with pytest.raises(MeshError):
        generate_uniform_grid(0)
    with pytest.raises(MeshError):
        generate_uniform_grid(2, ((0, 0), (0, 1)))
    with pytest.raises(MeshError):   # clockwise cell
        Mesh.from_triangles([[0, 0], [1, 0], [0, 1]], [[0, 2, 1]])
    with pytest.raises(MeshError):   # edge shared by three cells
        Mesh.from_triangles([[0, 0], [1, 0], [0, 1], [1, 1], [0, -1]],
                            [[0, 1, 2], [0, 1, 3], [1, 0, 4]])


def test_geometry_frames():
    m = generate_uniform_grid(2)
    g = geometry(m, 0)
    assert np.isclose(g.det, (pi / 2) ** 2)
    assert np.allclose(np.sum(g.normals * g.tangents, axis=1), 0)
    # outward normals integrate to zero around a closed cell
    assert np.allclose((g.normals * g.lengths[:, None]).sum(axis=0), 0)
    n, t, _ = edge_frames(m.cell_vertices)
    assert np.allclose(t[..., 0], -n[..., 1]) and np.allclose(t[..., 1], n[..., 0])
    with pytest.raises(IndexError):
        geometry(m, m.n_cells)


def test_permuted_mesh_same_edges():
    m = generate_uniform_grid(3)
    p = m.permuted(np.random.default_rng(0).permutation(m.n_cells))
    assert np.array_equal(p.edges, m.edges)
    assert np.isclose(p.areas.sum(), m.areas.sum())
