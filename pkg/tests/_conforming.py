"""Directly assembled conforming edge-element discretization.

Built only from the reference-element basis and the mesh connectivity,
without the hybrid machinery, so that it can serve as an independent
oracle for the kernel evolution.
"""
import numpy as np

from hybridem.refelem import (
    LOCAL_EDGES, REF_VERTICES, affine_data, gauss_triangle, make_basis, modal_tabulate,
)


class ConformingEdgeSystem:
    """Mass and curl-curl matrices of the degree-k edge-BDM space with
    vanishing tangential trace, plus the map to broken modal coefficients
    of ``V1`` (the broken vector space of the same degree)."""

    def __init__(self, mesh, k, V1, eps=1.0, mu=1.0):
        basis = make_basis("edge-BDM", k)
        ne = 3 * (k + 1)
        nloc = basis.dim
        rule = gauss_triangle(2 * k + 2)
        phat = basis.values(rule.xy)               # (nq, nloc, 2)
        chat = basis.curls(rule.xy)                # (nq, nloc)
        ref_len = np.linalg.norm(REF_VERTICES[[2, 0, 1]] - REF_VERTICES[[1, 2, 0]], axis=1)

        edge_id = {tuple(e): i for i, e in enumerate(mesh.edges.tolist())}
        gdof, n = {}, 0
        for i, e in enumerate(mesh.edges.tolist()):
            if not mesh.boundary_edge[i]:
                for j in range(k + 1):
                    gdof[(i, j)] = n
                    n += 1
        cell_maps = []
        for t in range(mesh.n_cells):
            idx = []
            for j in range(nloc - ne):
                idx.append(n)
                n += 1
            cell_maps.append(idx)
        self.dim = n
        self.M = np.zeros((n, n))
        self.K = np.zeros((n, n))
        self.E = np.zeros((V1.dim, n))
        self._loc = []

        for t in range(mesh.n_cells):
            tri = np.sort(mesh.triangles[t])
            verts = mesh.vertices[tri]
            J, _, det = affine_data(verts)
            phys = np.linalg.solve(J.T, phat.reshape(-1, 2).T).T.reshape(phat.shape)
            curl = chat / det
            scale = np.ones(nloc)
            glob = np.full(nloc, -1)
            for e, (a, b) in enumerate(LOCAL_EDGES):
                length = np.linalg.norm(verts[b] - verts[a])
                gid = edge_id[tuple(sorted((tri[a], tri[b])))]
                for j in range(k + 1):
                    # edge 1 runs v2 -> v0, against the ascending global direction
                    sgn = (-1.0) ** (j + 1) if e == 1 else 1.0
                    scale[e * (k + 1) + j] = sgn * length / ref_len[e]
                    glob[e * (k + 1) + j] = gdof.get((gid, j), -1)
            glob[ne:] = cell_maps[t]
            phys = phys * scale[None, :, None]
            curl = curl * scale[None, :]
            w = rule.weights * abs(det)
            Ml = np.einsum("q,qic,qjc->ij", w, phys, phys) * eps
            Kl = np.einsum("q,qi,qj->ij", w, curl, curl) / mu
            keep = glob >= 0
            g = glob[keep]
            self.M[np.ix_(g, g)] += Ml[np.ix_(keep, keep)]
            self.K[np.ix_(g, g)] += Kl[np.ix_(keep, keep)]
            # broken modal coefficients in the V1 cell frame
            x = verts[0] + rule.xy @ J.T
            val, _ = modal_tabulate(k, mesh.cell_vertices[t][None], x[None])
            val = val[0]
            cx = np.einsum("q,qa,qi->ai", rule.weights, val, phys[..., 0])
            cy = np.einsum("q,qa,qi->ai", rule.weights, val, phys[..., 1])
            rows = V1.cell_dofs[t]
            loc = np.concatenate([cx, cy])[:, keep]
            self.E[np.ix_(rows, g)] += loc
            self._loc.append((x, phys[:, keep], g, w))

    def load(self, f):
        """int f . phi_i for a vector callback ``f(x, y) -> (fx, fy)``."""
        out = np.zeros(self.dim)
        for x, phys, g, w in self._loc:
            fx, fy = f(x[:, 0], x[:, 1])
            out[g] += np.einsum("q,qi->i", w, phys[..., 0] * fx[:, None] + phys[..., 1] * fy[:, None])
        return out

    def leapfrog(self, c, e, dt, steps, eps=1.0):
        """A/D leapfrog: dA/dt = -D / eps, M dD/dt = K A."""
        Minv = np.linalg.inv(self.M / eps)     # unweighted mass
        out = []
        for _ in range(steps):
            half = c - 0.5 * dt * e / eps
            e = e + dt * (Minv @ (self.K @ half))
            c = half - 0.5 * dt * e / eps
            out.append((c, e))
        return out
