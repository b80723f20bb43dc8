"""Structured triangulations of the unit square with a matched boundary mesh.

The bulk mesh is a uniform n-by-n grid of squares, each split along the
lower-left to upper-right diagonal.  The boundary mesh consists of the 4n
edges induced on the four sides of the square, so the boundary finite
element space is exactly the trace of the bulk space.  All meshes produced
here are quasiuniform with a ratio independent of n.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class MeshError(ValueError):
    """Raised for invalid mesh parameters or broken mesh topology."""


@dataclass(frozen=True)
class TriMesh:
    """Triangulation of the unit square with its induced boundary partition.

    vertices: (N_O, 2) array of node coordinates.
    triangles: (M, 3) array of vertex indices, positively oriented.
    boundary_edges: (M_G, 2) array of vertex index pairs, ordered
        counterclockwise around the boundary.
    boundary_nodes: (N_G,) bulk indices of the nodes lying on the boundary.
    trace_map: alias of boundary_nodes; boundary-local index j corresponds
        to bulk node trace_map[j].
    h: mesh size (maximum element diameter).
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_nodes: np.ndarray
    h: float
    n: int = field(default=0)

    @property
    def trace_map(self) -> np.ndarray:
        return self.boundary_nodes

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_boundary_nodes(self) -> int:
        return self.boundary_nodes.shape[0]

    def triangle_areas(self) -> np.ndarray:
        """Signed areas of all triangles (positive for valid meshes)."""
        p = self.vertices
        t = self.triangles
        d1 = p[t[:, 1]] - p[t[:, 0]]
        d2 = p[t[:, 2]] - p[t[:, 0]]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def boundary_edge_lengths(self) -> np.ndarray:
        p = self.vertices
        e = self.boundary_edges
        return np.linalg.norm(p[e[:, 1]] - p[e[:, 0]], axis=1)


def build_unit_square(n: int) -> TriMesh:
    """Build the structured right-triangle mesh of (0,1)^2 with n subdivisions.

    The mesh has (n+1)^2 vertices, 2 n^2 triangles and 4n boundary edges;
    h = sqrt(2)/n.  The diagonal of every cell runs from the lower-left to
    the upper-right corner so that assembled matrices are reproducible.
    """
    if n < 1:
        raise MeshError(f"subdivision count must be >= 1, got {n}")

    xs = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(xs, xs, indexing="xy")
    # node (i, j) = (i/n, j/n) gets index i*(n+1) + j
    vertices = np.column_stack([xx.T.ravel(), yy.T.ravel()])

    def vid(i: int, j: int) -> int:
        return i * (n + 1) + j

    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    k = 0
    for i in range(n):
        for j in range(n):
            v00 = vid(i, j)
            v10 = vid(i + 1, j)
            v01 = vid(i, j + 1)
            v11 = vid(i + 1, j + 1)
            # both triangles counterclockwise, diagonal v00 -> v11
            triangles[k] = (v00, v10, v11)
            triangles[k + 1] = (v00, v11, v01)
            k += 2

    # counterclockwise boundary walk: bottom, right, top, left
    loop = (
        [vid(i, 0) for i in range(n)]
        + [vid(n, j) for j in range(n)]
        + [vid(n - i, n) for i in range(n)]
        + [vid(0, n - j) for j in range(n)]
    )
    boundary_edges = np.array(
        [(loop[k], loop[(k + 1) % len(loop)]) for k in range(len(loop))],
        dtype=np.int64,
    )
    boundary_nodes = np.array(loop, dtype=np.int64)

    return TriMesh(
        vertices=vertices,
        triangles=triangles,
        boundary_edges=boundary_edges,
        boundary_nodes=boundary_nodes,
        h=float(np.sqrt(2.0) / n),
        n=n,
    )


def extract_boundary(mesh: TriMesh) -> tuple[np.ndarray, np.ndarray]:
    """Return (boundary_edges, trace_map) after checking mesh topology.

    Every boundary edge must be the face of exactly one triangle and every
    interior edge the face of exactly two (watertight mesh).
    """
    counts: dict[tuple[int, int], int] = {}
    for tri in mesh.triangles:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(a, b), max(a, b))
            counts[key] = counts.get(key, 0) + 1

    boundary_keys = {(min(a, b), max(a, b)) for a, b in mesh.boundary_edges}
    for key, c in counts.items():
        expected = 1 if key in boundary_keys else 2
        if c != expected:
            raise MeshError(f"edge {key} belongs to {c} triangles, expected {expected}")
    missing = boundary_keys - set(counts)
    if missing:
        raise MeshError(f"boundary edges {sorted(missing)} are not faces of any triangle")

    return mesh.boundary_edges, mesh.trace_map


def quasiuniformity_ratio(mesh: TriMesh) -> float:
    """Max element diameter over min inscribed-circle diameter."""
    p = mesh.vertices
    t = mesh.triangles
    a = np.linalg.norm(p[t[:, 1]] - p[t[:, 0]], axis=1)
    b = np.linalg.norm(p[t[:, 2]] - p[t[:, 1]], axis=1)
    c = np.linalg.norm(p[t[:, 0]] - p[t[:, 2]], axis=1)
    diam = np.maximum(a, np.maximum(b, c))
    s = 0.5 * (a + b + c)
    incircle_diam = 2.0 * mesh.triangle_areas() / s
    return float(np.max(diam) / np.min(incircle_diam))


def write_vtk_mesh(path: str, mesh: TriMesh) -> None:
    """Dump the triangulation as a legacy ASCII VTK UNSTRUCTURED_GRID file."""
    from .vtkio import write_vtk

    write_vtk(path, mesh, {})
