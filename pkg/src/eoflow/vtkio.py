"""Legacy-ASCII VTK output (UNSTRUCTURED_GRID, triangle cells).

Point data carries the vertex values of the scalar fields and the velocity;
bubble coefficients have no nodal meaning and are dropped. Values are
printed with 17 significant digits so files round-trip float64 exactly, and
contain nothing run-dependent beyond the fields themselves.
"""

import os

import numpy as np

from . import fem

VTK_TRIANGLE = 5


def _fmt(value):
    return f"{value:.17g}"


def write_vtk(path, mesh, point_scalars=None, point_vectors=None, title="eoflow fields"):
    """Write a mesh with optional per-vertex scalar/vector point data."""
    point_scalars = point_scalars or {}
    point_vectors = point_vectors or {}
    nv, nt = mesh.num_vertices, mesh.num_triangles
    for name, arr in point_scalars.items():
        if len(arr) != nv:
            raise ValueError(f"scalar field {name!r} must have one value per vertex")
    for name, arr in point_vectors.items():
        if np.asarray(arr).shape != (nv, 2):
            raise ValueError(f"vector field {name!r} must have shape (nv, 2)")

    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"{title}\n")
        fh.write("ASCII\n")
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {nv} double\n")
        for x, y in mesh.vertices:
            fh.write(f"{_fmt(x)} {_fmt(y)} 0\n")
        fh.write(f"CELLS {nt} {4 * nt}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"3 {a} {b} {c}\n")
        fh.write(f"CELL_TYPES {nt}\n")
        for _ in range(nt):
            fh.write(f"{VTK_TRIANGLE}\n")
        if point_scalars or point_vectors:
            fh.write(f"POINT_DATA {nv}\n")
            for name, arr in point_scalars.items():
                fh.write(f"SCALARS {name} double 1\n")
                fh.write("LOOKUP_TABLE default\n")
                for v in arr:
                    fh.write(f"{_fmt(v)}\n")
            for name, arr in point_vectors.items():
                fh.write(f"VECTORS {name} double\n")
                for vx, vy in arr:
                    fh.write(f"{_fmt(vx)} {_fmt(vy)} 0\n")


def write_state_vtk(path, mesh, state):
    """Write one simulation state: rho, phi, p, every species, and u."""
    nv = mesh.num_vertices
    ns = fem.scalar_dof_count(mesh)
    scalars = {
        "rho": state.rho[:nv],
        "phi": state.phi[:nv],
        "p": state.p[:nv],
    }
    for i in range(state.c.shape[0]):
        scalars[f"c{i + 1}"] = state.c[i, :nv]
    vectors = {"u": np.column_stack([state.u[:nv], state.u[ns : ns + nv]])}
    write_vtk(path, mesh, scalars, vectors)
