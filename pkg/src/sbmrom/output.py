"""Field and table writers: legacy ASCII VTK and deterministic CSV."""

from __future__ import annotations

import numpy as np


def write_vtk(path, mesh, vectors=None, scalars=None):
    """Legacy ASCII VTK unstructured grid with point data.

    ``vectors`` maps names to component-blocked arrays of length
    ``2 * n_nodes``; ``scalars`` maps names to arrays of length ``n_nodes``.
    """
    n = mesh.n_nodes
    lines = [
        "# vtk DataFile Version 3.0",
        "sbmrom fields",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {n} double",
    ]
    for x, y in mesh.nodes:
        lines.append(f"{float(x)!r} {float(y)!r} 0.0")
    n_tri = mesh.n_triangles
    lines.append(f"CELLS {n_tri} {4 * n_tri}")
    for i, j, k in mesh.triangles:
        lines.append(f"3 {i} {j} {k}")
    lines.append(f"CELL_TYPES {n_tri}")
    lines.extend(["5"] * n_tri)
    lines.append(f"POINT_DATA {n}")
    for name, field in (vectors or {}).items():
        lines.append(f"VECTORS {name} double")
        for i in range(n):
            lines.append(f"{float(field[i])!r} {float(field[n + i])!r} 0.0")
    for name, field in (scalars or {}).items():
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        for i in range(n):
            lines.append(f"{float(field[i])!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def format_float(x) -> str:
    """Deterministic shortest-roundtrip float formatting."""
    return repr(float(x))


def write_csv(path, header, rows):
    """CSV with deterministic float formatting."""
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = [
                format_float(c) if isinstance(c, (float, np.floating)) else str(c)
                for c in row
            ]
            fh.write(",".join(cells) + "\n")
