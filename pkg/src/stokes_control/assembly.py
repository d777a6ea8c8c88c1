"""
Sparse assembly of the P1/P0 operators.

All velocity operators act on the full vector-P1 layout (every fine vertex,
both components); restriction to free DOFs happens in the solvers.  Element
loops are vectorised over triangles and duplicate COO entries are summed by
SciPy in a fixed order, so the matrices are reproducible bit for bit.
"""

from dataclasses import dataclass

import numpy as np
from scipy import sparse as sp

from .quadrature import triangle_quadrature


def element_geometry(mesh):
    """
    Areas and barycentric-coordinate gradients of a :class:`TriMesh`.

    Returns
    -------
    area : (nt,)
    grad_lam : (nt, 3, 2), ``grad_lam[t, i]`` is the gradient of the i-th
        barycentric coordinate on triangle t.
    """
    p = mesh.vertices[mesh.triangles]
    d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    if np.any(det <= 0):
        raise ValueError("degenerate or clockwise triangle in assembly")
    # rows of inv(J^T) are the gradients of lambda_1, lambda_2
    g1 = np.stack([d2[:, 1], -d2[:, 0]], axis=1) / det[:, None]
    g2 = np.stack([-d1[:, 1], d1[:, 0]], axis=1) / det[:, None]
    grad_lam = np.stack([-g1 - g2, g1, g2], axis=1)
    return 0.5 * det, grad_lam


def _vector_block(scalar):
    """Scalar P1 matrix to the interleaved two-component layout."""
    return sp.kron(scalar, sp.identity(2, format="csr"), format="csr")


def scalar_stiffness(mesh):
    area, g = element_geometry(mesh)
    local = area[:, None, None] * np.einsum("tid,tjd->tij", g, g)
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.num_vertices
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def scalar_mass(mesh):
    area, _ = element_geometry(mesh)
    ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    local = area[:, None, None] * ref[None]
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.num_vertices
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def assemble_stiffness(spaces):
    """Vector Laplacian ``a(w, z) = int grad w : grad z`` on the fine mesh."""
    return _vector_block(scalar_stiffness(spaces.mesh.fine))


def assemble_mass(spaces):
    """Vector P1 mass matrix on the fine mesh."""
    return _vector_block(scalar_mass(spaces.mesh.fine))


def assemble_divergence(spaces, pressure_level="coarse"):
    """
    ``B[K, dof] = b(phi_dof, 1_K) = -int_K div phi_dof``.

    Rows are coarse triangles (the two-level pair).  ``pressure_level='fine'``
    gives the single-level P1/P0 pair, used only as a negative control for
    the inf-sup check.
    """
    mesh = spaces.mesh
    fine = mesh.fine
    area, g = element_geometry(fine)
    t = fine.triangles
    # div of lambda_i e_c is d(lambda_i)/dx_c
    vals = -area[:, None, None] * g               # (nt, 3, 2)
    cols = (2 * t[:, :, None] + np.arange(2)[None, None, :])
    if pressure_level == "coarse":
        rows = np.broadcast_to(mesh.parent[:, None, None], cols.shape)
        nrow = mesh.coarse.num_triangles
    elif pressure_level == "fine":
        rows = np.broadcast_to(np.arange(fine.num_triangles)[:, None, None],
                               cols.shape)
        nrow = fine.num_triangles
    else:
        raise ValueError("pressure_level must be 'coarse' or 'fine'")
    return sp.csr_matrix((vals.ravel(), (rows.ravel(), cols.ravel())),
                         shape=(nrow, spaces.ndof))


def _quad_data(spaces, quad):
    fine = spaces.mesh.fine
    area, _ = element_geometry(fine)
    corners = fine.vertices[fine.triangles]
    xq = quad.physical_points(corners)                # (nt, nq, 2)
    return fine, area, xq


def assemble_load(f, spaces, quad=None):
    """
    ``F[2i+c] = int f_c phi_i`` by quadrature over the fine triangles.

    ``f`` maps (n, 2) points to (n, 2) values.
    """
    quad = quad or triangle_quadrature(6)
    fine, area, xq = _quad_data(spaces, quad)
    nt, nq = xq.shape[:2]
    fv = np.asarray(f(xq.reshape(-1, 2)), float).reshape(nt, nq, 2)
    local = np.einsum("q,t,qi,tqc->tic", quad.weights, area, quad.points, fv)
    idx = 2 * fine.triangles[:, :, None] + np.arange(2)[None, None, :]
    return np.bincount(idx.ravel(), weights=local.ravel(),
                       minlength=spaces.ndof)


def assemble_gradient_load(grad_g, spaces, quad=None):
    """
    ``a(g, phi_dof) = int grad g : grad phi_dof`` for a vector field ``g``
    given through its gradient callable ((n, 2) -> (n, 2, 2), indexed
    ``[point, component, derivative]``).
    """
    quad = quad or triangle_quadrature(6)
    fine, area, xq = _quad_data(spaces, quad)
    _, glam = element_geometry(fine)
    nt, nq = xq.shape[:2]
    gv = np.asarray(grad_g(xq.reshape(-1, 2)), float).reshape(nt, nq, 2, 2)
    mean_grad = np.einsum("q,tqcd->tcd", quad.weights, gv) * area[:, None, None]
    local = np.einsum("tcd,tid->tic", mean_grad, glam)
    idx = 2 * fine.triangles[:, :, None] + np.arange(2)[None, None, :]
    return np.bincount(idx.ravel(), weights=local.ravel(),
                       minlength=spaces.ndof)


def assemble_divergence_load(grad_g, spaces, quad=None):
    """``b(g, 1_K) = -int_K div g`` per coarse triangle, by quadrature."""
    quad = quad or triangle_quadrature(6)
    fine, area, xq = _quad_data(spaces, quad)
    nt, nq = xq.shape[:2]
    gv = np.asarray(grad_g(xq.reshape(-1, 2)), float).reshape(nt, nq, 2, 2)
    div = gv[..., 0, 0] + gv[..., 1, 1]
    per_fine = -area * (div @ quad.weights)
    return np.bincount(spaces.mesh.parent, weights=per_fine,
                       minlength=spaces.npressure)


def assemble_pressure_load(p, spaces, quad=None):
    """``b(phi_dof, p) = -int p div phi_dof`` for a scalar callable ``p``."""
    quad = quad or triangle_quadrature(6)
    fine, area, xq = _quad_data(spaces, quad)
    _, glam = element_geometry(fine)
    nt, nq = xq.shape[:2]
    pv = np.asarray(p(xq.reshape(-1, 2)), float).reshape(nt, nq)
    local = -(area * (pv @ quad.weights))[:, None, None] * glam
    idx = 2 * fine.triangles[:, :, None] + np.arange(2)[None, None, :]
    return np.bincount(idx.ravel(), weights=local.ravel(),
                       minlength=spaces.ndof)


def check_symmetric(mat, rtol=1e-13):
    """Raise if ``max|A - A^T| > rtol * max|A|``."""
    diff = abs(mat - mat.T)
    dmax = diff.max() if diff.nnz else 0.0
    scale = abs(mat).max() if mat.nnz else 0.0
    if dmax > rtol * scale:
        raise ValueError("operator not symmetric: {:.3e} > {:.1e} * {:.3e}"
                         .format(dmax, rtol, scale))


@dataclass(frozen=True)
class OperatorSet:
    """Stiffness, mass and coarse divergence for one pair of spaces."""

    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    divergence: sp.csr_matrix
    pressure_mass: np.ndarray     # coarse triangle areas

    @property
    def A(self):
        return self.stiffness

    @property
    def M(self):
        return self.mass

    @property
    def B(self):
        return self.divergence


def assemble_operators(spaces):
    A = assemble_stiffness(spaces)
    M = assemble_mass(spaces)
    check_symmetric(A)
    check_symmetric(M)
    B = assemble_divergence(spaces)
    return OperatorSet(A, M, B, spaces.mesh.coarse.areas())


def dump_coo(mat, path):
    """Write ``row col value`` lines (full precision)."""
    coo = sp.coo_matrix(mat)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        for i, j, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write("{} {} {!r}\n".format(int(i), int(j), float(v)))
