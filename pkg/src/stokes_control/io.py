"""
Legacy ASCII VTK and CSV dumps of meshes and discrete fields.

Field values are written with 17 significant digits so a dump can be read
back bit for bit; only the convergence tables use 6 digits.
"""

import csv
import os

import numpy as np

VTK_TRIANGLE = 5


def _fmt(v):
    return "{:.17g}".format(float(v))


def write_vtk(path, points, triangles, point_vectors=None, point_scalars=None,
              cell_scalars=None, cell_ints=None, point_ints=None,
              title="stokes_control"):
    """
    Write an UNSTRUCTURED_GRID of triangles.

    ``point_vectors`` map names to (npoints, 2) arrays (padded with a zero
    third component); the scalar dicts map names to 1-D arrays.
    """
    points = np.asarray(points, float)
    triangles = np.asarray(triangles, dtype=np.int64)
    npt, nt = len(points), len(triangles)
    lines = ["# vtk DataFile Version 3.0", title, "ASCII",
             "DATASET UNSTRUCTURED_GRID",
             "POINTS {} double".format(npt)]
    lines += ["{} {} 0".format(_fmt(x), _fmt(y)) for x, y in points]
    lines.append("CELLS {} {}".format(nt, 4 * nt))
    lines += ["3 {} {} {}".format(*t) for t in triangles]
    lines.append("CELL_TYPES {}".format(nt))
    lines += [str(VTK_TRIANGLE)] * nt

    def block(kind, n, vectors, scalars, ints):
        out = []
        for name, v in (vectors or {}).items():
            v = np.asarray(v, float).reshape(n, 2)
            out.append("VECTORS {} double".format(name))
            out += ["{} {} 0".format(_fmt(a), _fmt(b)) for a, b in v]
        for name, v in (scalars or {}).items():
            v = np.asarray(v, float).reshape(n)
            out += ["SCALARS {} double 1".format(name), "LOOKUP_TABLE default"]
            out += [_fmt(a) for a in v]
        for name, v in (ints or {}).items():
            v = np.asarray(v).reshape(n)
            out += ["SCALARS {} int 1".format(name), "LOOKUP_TABLE default"]
            out += [str(int(a)) for a in v]
        return ["{} {}".format(kind, n)] + out if out else []

    lines += block("POINT_DATA", npt, point_vectors, point_scalars, point_ints)
    lines += block("CELL_DATA", nt, None, cell_scalars, cell_ints)
    _write_text(path, "\n".join(lines) + "\n")
    return path


def _write_text(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def write_mesh_vtk(mesh, path_prefix):
    """
    Coarse and fine meshes with integer tags: boundary code per point
    (0 interior, 1 Dirichlet, 2 control, 3 Neumann, closures first), parent
    coarse triangle per fine cell.  Returns the written paths.
    """
    codes = mesh.boundary.vertex_codes() if mesh.boundary is not None else \
        np.zeros(mesh.fine.num_vertices, dtype=int)
    fine = write_vtk(path_prefix + "_fine.vtk", mesh.fine.vertices,
                     mesh.fine.triangles, point_ints={"boundary": codes},
                     cell_ints={"parent": mesh.parent})
    coarse = write_vtk(path_prefix + "_coarse.vtk", mesh.coarse.vertices,
                       mesh.coarse.triangles,
                       cell_ints={"index": np.arange(mesh.coarse.num_triangles)})
    return [fine, coarse]


def write_solution_vtk(sol, mesh, path):
    """``u, phi`` as point vectors, ``p, r`` (coarse P0) on the fine cells."""
    return write_vtk(path, mesh.fine.vertices, mesh.fine.triangles,
                     point_vectors={"u": sol.u, "phi": sol.phi},
                     cell_scalars={"p": np.asarray(sol.p)[mesh.parent],
                                   "r": np.asarray(sol.r)[mesh.parent]})


def write_control_vtk(sol, mesh, path):
    return write_vtk(path, mesh.fine.vertices, mesh.fine.triangles,
                     point_vectors={"y": sol.y})


def write_point_csv(sol, mesh, path):
    """One row per fine vertex: coordinates, u, phi, y."""
    v = mesh.fine.vertices
    u, phi, y = (np.asarray(a).reshape(-1, 2) for a in (sol.u, sol.phi, sol.y))
    rows = np.column_stack([v, u, phi, y])
    head = ["x", "y_coord", "u1", "u2", "phi1", "phi2", "y1", "y2"]
    return _write_rows(path, head, rows, index_name="vertex")


def write_cell_csv(sol, mesh, path):
    """One row per coarse triangle: centroid, p, r."""
    c = mesh.coarse.vertices[mesh.coarse.triangles].mean(axis=1)
    rows = np.column_stack([c, sol.p, sol.r])
    return _write_rows(path, ["cx", "cy", "p", "r"], rows, index_name="cell")


def _write_rows(path, head, rows, index_name):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([index_name] + head)
        for i, r in enumerate(rows):
            w.writerow([i] + [_fmt(a) for a in r])
    return path


def read_point_csv(path):
    """Inverse of :func:`write_point_csv`: ``(u, phi, y)`` flat arrays."""
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    data = np.atleast_2d(data)
    return (data[:, 3:5].ravel(), data[:, 5:7].ravel(), data[:, 7:9].ravel())


def read_cell_csv(path):
    data = np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1))
    return data[:, 3], data[:, 4]


def write_history_csv(history, path):
    """PDAS iteration log."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "n_lower_active", "n_upper_active",
                    "stationarity", "cost"])
        for h in history:
            w.writerow([h["iter"], h["lower"], h["upper"],
                        "{:.6e}".format(h["stationarity"]), _fmt(h["cost"])])
    return path
