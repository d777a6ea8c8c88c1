"""
State and adjoint Stokes solves on the two-level pair.

Both problems share the symmetric saddle matrix

    [ A_VV   B~^T ]
    [ B~     0    ]

with ``B~ = Z^T B``.  ``Z`` is the identity when part of the boundary is
Neumann.  Otherwise the pressure lives in the zero-mean P0 space, spanned
here by ``1_K/|K| - 1_K'/|K'|`` over the edges of a spanning tree of the
coarse triangles.  Pressures and divergence tests then stay local, so no
dense mean-value row enters the factorization.  The adjoint pressure
enters with the opposite sign, so one factorization serves both.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy import sparse as sp
from scipy.sparse import csgraph
from scipy.sparse import linalg as spla

from .assembly import (assemble_divergence, assemble_divergence_load,
                       assemble_gradient_load, assemble_load, element_geometry)
from .quadrature import triangle_quadrature


class SingularSystemError(RuntimeError):
    """A direct factorization broke down."""


def zero_mean_basis(coarse):
    """
    Sparse ``(nt, nt - 1)`` matrix whose columns ``1_K/|K| - 1_K'/|K'|``
    (``K, K'`` adjacent along a breadth-first spanning tree) span the
    zero-mean P0 functions.
    """
    nt = coarse.num_triangles
    _, tri_edges, counts = coarse.edges()
    flat = tri_edges.ravel()
    owner = np.repeat(np.arange(nt), 3)
    order = np.argsort(flat, kind="stable")
    flat, owner = flat[order], owner[order]
    interior = counts[flat] == 2
    # each interior edge appears twice, consecutive after sorting
    pairs = owner[interior].reshape(-1, 2)
    adj = sp.coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])),
                        shape=(nt, nt)).tocsr()
    tree = csgraph.breadth_first_tree(adj + adj.T, 0, directed=False).tocoo()
    if tree.nnz != nt - 1:
        raise ValueError("coarse mesh is not connected")
    area = coarse.areas()
    cols = np.arange(tree.nnz)
    return sp.csr_matrix(
        (np.concatenate([1.0 / area[tree.row], -1.0 / area[tree.col]]),
         (np.concatenate([tree.row, tree.col]), np.tile(cols, 2))),
        shape=(nt, nt - 1))


def pressure_basis(spaces):
    """Identity, or :func:`zero_mean_basis` when the pressure has no
    Neumann boundary to fix its constant."""
    if spaces.pressure_zero_mean:
        return zero_mean_basis(spaces.mesh.coarse)
    return sp.identity(spaces.npressure, format="csr")


@dataclass
class SaddleSystem:
    """Velocity block on a free set, coupling block, pressure basis."""

    A: sp.csr_matrix          # (nv, nv)
    B: sp.csr_matrix          # (np, nv)
    Z: sp.csr_matrix = None   # (np, nc) pressure basis, identity if None

    def __post_init__(self):
        if self.Z is None:
            self.Z = sp.identity(self.B.shape[0], format="csr")
        self.Bz = (self.Z.T @ self.B).tocsr()

    @property
    def nv(self):
        return self.A.shape[0]

    @property
    def np(self):
        return self.B.shape[0]

    @property
    def nc(self):
        return self.Z.shape[1]

    def matrix(self):
        return sp.bmat([[self.A, self.Bz.T], [self.Bz, None]], format="csc")

    @property
    def size(self):
        return self.nv + self.nc


@dataclass
class StokesSolution:
    """Full-layout velocity, coarse pressure and diagnostics."""

    velocity: np.ndarray
    pressure: np.ndarray
    residual: float
    multiplier: float = 0.0   # uniform divergence left by the flux, -flux/|Omega|
    net_flux: float = 0.0     # int_{boundary} y . n of the imposed data


def factorize(K):
    """Sparse LU with a pivot sanity check."""
    try:
        lu = spla.splu(sp.csc_matrix(K))
    except RuntimeError as exc:
        raise SingularSystemError(
            "factorization failed: {}".format(exc)) from None
    diag = np.abs(lu.U.diagonal())
    if diag.size and diag.min() <= 1e-14 * diag.max():
        raise SingularSystemError(
            "matrix is numerically singular (pivot ratio {:.2e})"
            .format(diag.min() / diag.max()))
    return lu


def refined_solve(lu, K, rhs, tol):
    """Solve plus one step of iterative refinement; returns ``(x, rel_res)``."""
    x = lu.solve(rhs)
    scale = np.linalg.norm(rhs)
    if scale == 0:
        return x, 0.0
    res = np.linalg.norm(K @ x - rhs)
    if res > tol * scale:
        x += lu.solve(rhs - K @ x)
        res = np.linalg.norm(K @ x - rhs)
        if res > tol * scale:
            raise SingularSystemError(
                "solve residual {:.2e} exceeds tolerance".format(res / scale))
    return x, res / scale


class SaddleSolver:
    """LU factorization of a :class:`SaddleSystem`, reusable across solves."""

    def __init__(self, system):
        self.system = system
        self.K = system.matrix()
        self.lu = factorize(self.K)

    def solve(self, rhs_v, rhs_p, tol=1e-10):
        """
        ``rhs_p`` holds one entry per coarse triangle (tests with ``1_K``);
        only its projection on the pressure basis is used.  Returns
        ``(v, p, rel_res)`` with ``p`` per coarse triangle.
        """
        sysm = self.system
        rhs = np.concatenate([rhs_v, sysm.Z.T @ rhs_p])
        x, rel = refined_solve(self.lu, self.K, rhs, tol)
        return x[:sysm.nv], sysm.Z @ x[sysm.nv:], rel


def solve_saddle(system, rhs_v, rhs_p, tol=1e-10):
    """One-off direct solve; returns ``(v, p, rel_res)``."""
    return SaddleSolver(system).solve(rhs_v, rhs_p, tol)


def saddle_system(spaces, ops):
    """The shared state/adjoint saddle system of a pair of spaces."""
    v = spaces.v_free
    A = ops.A[v][:, v].tocsr()
    B = ops.B[:, v].tocsr()
    return SaddleSystem(A, B, pressure_basis(spaces))


class StokesProblem:
    """
    Spaces, operators and one factorization of the saddle system.

    The state and adjoint solves (and the auxiliary projections) all go
    through :attr:`solver`.
    """

    def __init__(self, spaces, ops, tol=1e-10):
        self.spaces = spaces
        self.ops = ops
        self.tol = tol
        self.system = saddle_system(spaces, ops)
        self._solver = None

    @property
    def solver(self):
        if self._solver is None:
            self._solver = SaddleSolver(self.system)
        return self._solver

    def _velocity(self, v_free_vals, lift=None):
        full = np.zeros(self.spaces.ndof) if lift is None else lift.copy()
        full[self.spaces.v_free] += v_free_vals
        return full

    def net_flux(self, y):
        """``int_{boundary} y . n = -sum_K b(y, 1_K)``."""
        return -float(np.sum(self.ops.B @ y))

    def state(self, y, f_load):
        """
        ``u = w + y`` with ``a(w,z) + b(z,p) = (f,z) - a(y,z)`` and
        ``b(w,q) = -b(y,q)``.
        """
        v = self.spaces.v_free
        rhs_v = f_load[v] - (self.ops.A @ y)[v]
        rhs_p = -(self.ops.B @ y)
        w, p, res = self.solver.solve(rhs_v, rhs_p, self.tol)
        flux = self.net_flux(y)
        lam = (-flux / self.ops.pressure_mass.sum()
               if self.spaces.pressure_zero_mean else 0.0)
        return StokesSolution(self._velocity(w, y), p, res, lam, flux)

    def adjoint(self, u, ud_load):
        """
        ``a(z,phi) - b(z,r) = (u - u_d, z)``, ``b(phi,q) = 0``; solved with
        ``s = -r`` in the symmetric matrix.
        """
        v = self.spaces.v_free
        rhs_v = (self.ops.M @ u - ud_load)[v]
        phi, s, res = self.solver.solve(rhs_v, np.zeros(self.spaces.npressure),
                                        self.tol)
        return StokesSolution(self._velocity(phi), -s, res)


def solve_state(y, f, spaces, ops, quad=None, problem=None):
    """State solve for control coefficients ``y`` and body force ``f``
    (callable or assembled load vector)."""
    problem = problem or StokesProblem(spaces, ops)
    f_load = f if isinstance(f, np.ndarray) else assemble_load(
        f, spaces, quad or triangle_quadrature(6))
    return problem.state(np.asarray(y, float), f_load)


def solve_adjoint(u, u_d, spaces, ops, quad=None, problem=None):
    """Adjoint solve for state ``u`` and target ``u_d`` (callable or load)."""
    problem = problem or StokesProblem(spaces, ops)
    g = u_d if isinstance(u_d, np.ndarray) else assemble_load(
        u_d, spaces, quad or triangle_quadrature(6))
    return problem.adjoint(np.asarray(u, float), g)


def project_state(case, spaces, ops, quad=None, problem=None):
    """
    Discrete solution with the exact control on the right-hand side:
    ``a(Pw, z) + b(z, Rp) = (f, z) - a(y, z)``, ``b(Pw, q) = -b(y, q)``,
    with ``a(y, .)`` and ``b(y, .)`` integrated from the exact field.

    Returns ``(Pw, Rp)``; ``Pw`` is on the full layout and vanishes on the
    pinned DOFs.
    """
    quad = quad or triangle_quadrature(6)
    problem = problem or StokesProblem(spaces, ops)
    v = spaces.v_free
    rhs_v = (assemble_load(case.f, spaces, quad)
             - assemble_gradient_load(case.grad_y, spaces, quad))[v]
    rhs_p = -assemble_divergence_load(case.grad_y, spaces, quad)
    w, p, _ = problem.solver.solve(rhs_v, rhs_p, problem.tol)
    return problem._velocity(w), p


def project_adjoint(case, spaces, ops, quad=None, problem=None):
    """
    ``a(z, Pphi) - b(z, Rr) = (u - u_d, z)`` and ``b(Pphi, q) = 0`` with the
    exact ``u - u_d``.  Returns ``(Pphi, Rr)``.
    """
    quad = quad or triangle_quadrature(6)
    problem = problem or StokesProblem(spaces, ops)
    v = spaces.v_free
    rhs_v = assemble_load(lambda x: case.u(x) - case.u_d(x), spaces, quad)[v]
    phi, s, _ = problem.solver.solve(rhs_v, np.zeros(spaces.npressure),
                                        problem.tol)
    return problem._velocity(phi), -s


DENSE_LIMIT = 4000


def infsup_estimate(spaces, ops, pressure_level="coarse"):
    """
    Discrete inf-sup constant of the pair ``(V_h, M_H)``.

    Square root of the smallest eigenvalue of ``B A^{-1} B^T`` relative to
    the pressure mass matrix, on the complement of constants when the
    pressure is only determined up to a constant.  ``pressure_level='fine'``
    evaluates the single-level P1/P0 pair instead.
    """
    v = spaces.v_free
    if pressure_level == "coarse":
        B = ops.B[:, v].toarray()
        mp = ops.pressure_mass
    else:
        B = assemble_divergence(spaces, "fine")[:, v].toarray()
        mp, _ = element_geometry(spaces.mesh.fine)
    if v.size + B.shape[0] > DENSE_LIMIT:
        raise ValueError("mesh too large for the dense inf-sup estimate "
                         "({} unknowns > {})".format(v.size + B.shape[0],
                                                     DENSE_LIMIT))
    A = ops.A[v][:, v].toarray()
    S = B @ sla.solve(A, B.T, assume_a="pos")
    S = 0.5 * (S + S.T)
    # pressure-mass-orthonormal coordinates: q = D^{-1/2} c
    dinv = 1.0 / np.sqrt(mp)
    S = dinv[:, None] * S * dinv[None, :]
    if spaces.pressure_zero_mean:
        # drop the constant direction, which is D^{1/2} 1 in these coordinates
        c = np.sqrt(mp)
        c /= np.linalg.norm(c)
        Q, _ = np.linalg.qr(np.column_stack([c, np.eye(len(c))[:, :-1]]))
        Z = Q[:, 1:]
        S = Z.T @ S @ Z
    lam = sla.eigvalsh(S)
    return math.sqrt(max(lam[0], 0.0))
