"""P1 finite element operators: lumped masses, stiffness, trace selection.

All mass-type integrals of the scheme are written through nodal
interpolation, so only the lumped (diagonal) mass operators are assembled.
The surface stiffness is assembled edge-by-edge with 1D P1 elements; the
trace operator is a boolean selection of boundary nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import TriMesh


class AssemblyError(ValueError):
    """Raised when a mesh cannot be assembled (e.g. degenerate elements)."""


@dataclass(frozen=True)
class FemOperators:
    """Discrete operators on a TriMesh.

    m: bulk lumped-mass vector, m_i = sum of |K|/3 over incident triangles.
    K_bulk: bulk stiffness matrix (CSR, sorted indices).
    b: boundary lumped-mass vector, b_j = sum of |E|/2 over incident edges.
    K_surf: surface stiffness matrix on the boundary mesh (CSR).
    T: boundary trace selection matrix (N_G x N_O, one unit entry per row).
    """

    mesh: TriMesh
    m: np.ndarray
    K_bulk: sp.csr_matrix
    b: np.ndarray
    K_surf: sp.csr_matrix
    T: sp.csr_matrix

    @property
    def n_bulk(self) -> int:
        return self.m.shape[0]

    @property
    def n_surf(self) -> int:
        return self.b.shape[0]

    def trace(self, v: np.ndarray) -> np.ndarray:
        """Nodal trace: restrict a bulk vector to the boundary nodes."""
        return v[self.mesh.trace_map]


def assemble(mesh: TriMesh) -> FemOperators:
    """Assemble all FemOperators for a valid TriMesh.

    For P1 elements the assembled operators satisfy the exact quadrature
    identities  v^T diag(m) v = int I_h{|v_h|^2}  and
    v^T K_bulk v = int |grad v_h|^2.
    """
    p = mesh.vertices
    t = mesh.triangles
    n_bulk = mesh.num_vertices

    areas = mesh.triangle_areas()
    if np.any(areas <= 0):
        bad = int(np.argmin(areas))
        raise AssemblyError(f"triangle {bad} has non-positive area {areas[bad]}")

    m = np.zeros(n_bulk)
    np.add.at(m, t.ravel(), np.repeat(areas / 3.0, 3))

    # element stiffness: K_loc[a,b] = (g_a . g_b) * |K| with g_a the
    # constant gradient of the local basis function a
    rows = np.empty(9 * t.shape[0], dtype=np.int64)
    cols = np.empty_like(rows)
    vals = np.empty(9 * t.shape[0])
    x = p[:, 0][t]
    y = p[:, 1][t]
    # gradients of barycentric coordinates
    bvec = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    cvec = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    k = 0
    for a in range(3):
        for bidx in range(3):
            rows[k::9] = t[:, a]
            cols[k::9] = t[:, bidx]
            vals[k::9] = (bvec[:, a] * bvec[:, bidx] + cvec[:, a] * cvec[:, bidx]) / (4.0 * areas)
            k += 1
    K_bulk = sp.csr_matrix(sp.coo_matrix((vals, (rows, cols)), shape=(n_bulk, n_bulk)))
    K_bulk.sum_duplicates()
    K_bulk.sort_indices()

    # boundary: 1D P1 elements along each straight edge
    edges = mesh.boundary_edges
    lengths = mesh.boundary_edge_lengths()
    if np.any(lengths <= 0):
        raise AssemblyError("degenerate boundary edge")
    n_surf = mesh.num_boundary_nodes
    local = {int(g): j for j, g in enumerate(mesh.trace_map)}

    b = np.zeros(n_surf)
    srows, scols, svals = [], [], []
    for (ga, gb), ell in zip(edges, lengths):
        ja, jb = local[int(ga)], local[int(gb)]
        b[ja] += ell / 2.0
        b[jb] += ell / 2.0
        w = 1.0 / ell
        srows += [ja, ja, jb, jb]
        scols += [ja, jb, ja, jb]
        svals += [w, -w, -w, w]
    K_surf = sp.csr_matrix(sp.coo_matrix((svals, (srows, scols)), shape=(n_surf, n_surf)))
    K_surf.sum_duplicates()
    K_surf.sort_indices()

    T = sp.csr_matrix(
        (np.ones(n_surf), (np.arange(n_surf), mesh.trace_map)),
        shape=(n_surf, n_bulk),
    )

    return FemOperators(mesh=mesh, m=m, K_bulk=K_bulk, b=b, K_surf=K_surf, T=T)


def discrete_laplacian(ops: FemOperators, v: np.ndarray) -> np.ndarray:
    """Lumped discrete Laplacian: -diag(m)^{-1} K_bulk v.

    Satisfies  int I_h{(Lap_h v) psi} = -int grad v . grad psi  for every
    nodal psi.
    """
    if v.shape != ops.m.shape:
        raise ValueError(f"expected bulk vector of length {ops.n_bulk}, got {v.shape}")
    return -(ops.K_bulk @ v) / ops.m


def norm_bulk(ops: FemOperators, v: np.ndarray) -> float:
    """Lumped L2 norm on the bulk: sqrt(v^T diag(m) v)."""
    return float(np.sqrt(v @ (ops.m * v)))


def norm_h1_bulk(ops: FemOperators, v: np.ndarray) -> float:
    """Lumped H1 norm on the bulk."""
    return float(np.sqrt(v @ (ops.m * v) + v @ (ops.K_bulk @ v)))


def norm_surf(ops: FemOperators, v_gamma: np.ndarray) -> float:
    """Lumped L2 norm on the boundary: sqrt(v^T diag(b) v)."""
    return float(np.sqrt(v_gamma @ (ops.b * v_gamma)))


def norm_h1_surf(ops: FemOperators, v_gamma: np.ndarray) -> float:
    """Lumped H1 norm on the boundary."""
    return float(np.sqrt(v_gamma @ (ops.b * v_gamma) + v_gamma @ (ops.K_surf @ v_gamma)))
