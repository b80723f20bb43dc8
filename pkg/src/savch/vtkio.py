"""Legacy ASCII VTK output (UNSTRUCTURED_GRID, cell type 5)."""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .mesh import TriMesh


def write_vtk(path: str, mesh: TriMesh, point_data: Mapping[str, np.ndarray]) -> None:
    """Write the mesh and optional nodal scalar fields to a VTK legacy file.

    point_data maps field names (e.g. "phi", "mu") to nodal vectors of
    length mesh.num_vertices.
    """
    lines = [
        "# vtk DataFile Version 3.0",
        "savch snapshot",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.num_vertices} double",
    ]
    for x, y in mesh.vertices:
        lines.append(f"{x:.17g} {y:.17g} 0")

    m = mesh.triangles.shape[0]
    lines.append(f"CELLS {m} {4 * m}")
    for a, b, c in mesh.triangles:
        lines.append(f"3 {a} {b} {c}")
    lines.append(f"CELL_TYPES {m}")
    lines.extend(["5"] * m)

    if point_data:
        lines.append(f"POINT_DATA {mesh.num_vertices}")
        for name, values in point_data.items():
            if len(values) != mesh.num_vertices:
                raise ValueError(f"field {name!r} has length {len(values)}, expected {mesh.num_vertices}")
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(f"{v:.17g}" for v in values)

    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
