"""
Discrete spaces on a two-level mesh.

Velocity-type fields (state, adjoint, control) are vector P1 on the fine
mesh with DOF ``2 * vertex + component``; pressures are P0 on the coarse
mesh with one DOF per coarse triangle.  Coefficient vectors are plain
NumPy arrays in this layout, with pinned DOFs stored as explicit zeros.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .assembly import element_geometry


@dataclass(frozen=True)
class ControlBounds:
    """Componentwise box ``lower <= y(z) <= upper`` at control vertices."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo, up = np.asarray(self.lower, float), np.asarray(self.upper, float)
        if lo.shape != (2,) or up.shape != (2,):
            raise ValueError("bounds must be pairs (component 1, component 2)")
        if np.any(lo > up):
            raise ValueError("lower bound exceeds upper bound")

    def check_compatible(self, has_pinned_boundary):
        """Zero junction values must be admissible when part of the
        boundary is pinned."""
        lo, up = np.asarray(self.lower), np.asarray(self.upper)
        if has_pinned_boundary and (np.any(lo > 0) or np.any(up < 0)):
            raise ValueError("bounds must satisfy lower <= 0 <= upper when "
                             "the control vanishes on part of the boundary")

    def arrays(self, control_dofs):
        comp = np.asarray(control_dofs) % 2
        return (np.asarray(self.lower, float)[comp],
                np.asarray(self.upper, float)[comp])

    def scaled(self, s):
        return ControlBounds(tuple(s * np.asarray(self.lower, float)),
                             tuple(s * np.asarray(self.upper, float)))


UNBOUNDED = ControlBounds((-np.inf, -np.inf), (np.inf, np.inf))


def vertex_dofs(vertices):
    vertices = np.asarray(vertices, dtype=np.int64)
    return np.sort(np.concatenate([2 * vertices, 2 * vertices + 1]))


@dataclass(frozen=True)
class FunctionSpaces:
    """
    DOF layout and partitions.

    ``v_free`` are the state/adjoint unknowns (zero on closure of Gamma_D and
    Gamma_C), ``q_free`` the control unknowns (zero on closure of Gamma_D and
    Gamma_N), ``control`` the subset of ``q_free`` at control vertices.
    """

    mesh: object
    v_free: np.ndarray
    q_free: np.ndarray
    control: np.ndarray
    pressure_zero_mean: bool

    @property
    def num_vertices(self):
        return self.mesh.fine.num_vertices

    @property
    def ndof(self):
        return 2 * self.mesh.fine.num_vertices

    @property
    def npressure(self):
        return self.mesh.coarse.num_triangles

    @property
    def v_pinned(self):
        return np.setdiff1d(np.arange(self.ndof), self.v_free)

    @property
    def q_pinned(self):
        return np.setdiff1d(np.arange(self.ndof), self.q_free)

    def mask(self, space):
        m = np.zeros(self.ndof, dtype=bool)
        if space == "V":
            m[self.v_free] = True
        elif space == "Q":
            m[self.q_free] = True
        elif space == "full":
            m[:] = True
        else:
            raise ValueError("unknown space {!r}".format(space))
        return m


def build_spaces(mesh, boundary=None):
    """Partition the velocity DOFs of a classified two-level mesh."""
    bd = boundary if boundary is not None else mesh.boundary
    if bd is None:
        raise ValueError("mesh boundary has not been classified")
    nv = mesh.fine.num_vertices
    all_v = np.arange(nv)
    v_pinned = np.union1d(bd.dirichlet_closure, bd.control_closure)
    q_pinned = np.union1d(bd.dirichlet_closure, bd.neumann_closure)
    v_free = vertex_dofs(np.setdiff1d(all_v, v_pinned))
    q_free = vertex_dofs(np.setdiff1d(all_v, q_pinned))
    control = vertex_dofs(bd.control_vertices)
    if control.size == 0:
        warnings.warn("no control DOFs: Gamma_C is empty on this mesh")
    zero_mean = bd.neumann_closure.size == 0
    return FunctionSpaces(mesh, v_free, q_free, control, zero_mean)


def interpolate_nodal(field, spaces, space="Q"):
    """
    Lagrange interpolant: vertex values of ``field`` with the pinned DOFs of
    ``space`` ('V', 'Q' or 'full') set to zero.

    ``field`` maps an (n, 2) array of points to (n, 2) values.
    """
    vals = np.asarray(field(spaces.mesh.fine.vertices), dtype=float)
    coefs = vals.reshape(-1).copy()
    coefs[~spaces.mask(space)] = 0.0
    return coefs


def p1_gradients(coefs, mesh):
    """
    Constant gradient of a vector P1 field on every fine triangle.

    Returns an (nt, 2, 2) array indexed ``[triangle, component, d/dx_j]``.
    """
    _, grad_lam = element_geometry(mesh.fine)
    vals = np.asarray(coefs).reshape(-1, 2)[mesh.fine.triangles]  # (nt,3,2)
    return np.einsum("tic,tid->tcd", vals, grad_lam)


def evaluate_field(coefs, mesh, triangle, bary, kind="P1"):
    """
    Value of a discrete field at a barycentric point of one triangle.

    ``kind='P1'`` evaluates a vector P1 coefficient vector on fine triangle
    ``triangle``; ``kind='P0'`` returns the value on coarse triangle
    ``triangle``.
    """
    if kind == "P0":
        if not 0 <= triangle < mesh.coarse.num_triangles:
            raise IndexError("coarse triangle {} out of range".format(triangle))
        return float(np.asarray(coefs)[triangle])
    if kind != "P1":
        raise ValueError("kind must be 'P1' or 'P0'")
    if not 0 <= triangle < mesh.fine.num_triangles:
        raise IndexError("fine triangle {} out of range".format(triangle))
    vals = np.asarray(coefs).reshape(-1, 2)[mesh.fine.triangles[triangle]]
    return np.asarray(bary, float) @ vals
