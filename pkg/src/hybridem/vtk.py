"""Legacy ASCII VTK output of cell-averaged fields."""
from __future__ import annotations

import numpy as np

from .diagnostics import elementwise_divergence, to_broken

VTK_TRIANGLE = 5


def cell_means(fc) -> np.ndarray:
    """Cell averages of a field: (T,) for scalars, (T, 2) for vectors.

    The constant modal function equals sqrt(2) on the reference cell and
    the other modes have zero mean."""
    space, c = to_broken(fc)
    c = c.reshape(space.mesh.n_cells, -1)
    if space.kind == "broken-scalar":
        return np.sqrt(2.0) * c[:, 0]
    nb = c.shape[1] // 2
    return np.sqrt(2.0) * np.column_stack([c[:, 0], c[:, nb]])


def write_vtk(path, mesh, cell_data: dict, title: str = "hybridem"):
    """Write a triangle mesh with named cell fields (scalars or 2-vectors)."""
    T = mesh.n_cells
    with open(path, "w") as fh:
        fh.write(f"# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {mesh.n_vertices} double\n")
        for x, y in mesh.vertices:
            fh.write(f"{x!r} {y!r} 0.0\n")
        fh.write(f"CELLS {T} {4 * T}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"3 {a} {b} {c}\n")
        fh.write(f"CELL_TYPES {T}\n")
        fh.write("\n".join([str(VTK_TRIANGLE)] * T) + "\n")
        if cell_data:
            fh.write(f"CELL_DATA {T}\n")
        for name, arr in cell_data.items():
            arr = np.asarray(arr, dtype=float)
            if arr.ndim == 1:
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                fh.write("\n".join(repr(v) for v in arr) + "\n")
            else:
                fh.write(f"VECTORS {name} double\n")
                for vx, vy in arr:
                    fh.write(f"{vx!r} {vy!r} 0.0\n")


def write_snapshot(path, S, state):
    """D_h, D_hat and their element-wise divergences (cell means)."""
    data = {"D": cell_means(state.D), "div_D": cell_means(elementwise_divergence(state.D))}
    if state.Dhat is not None:
        data["Dhat"] = cell_means(state.Dhat)
        data["div_Dhat"] = cell_means(elementwise_divergence(state.Dhat))
    write_vtk(path, S.mesh, data, title=f"step {state.step} t={state.t!r}")
