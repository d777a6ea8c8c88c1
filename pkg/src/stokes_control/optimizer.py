"""
Discrete optimality system and primal-dual active-set solver.

The discrete problem is the convex QP

    min  1/2 ||u_h - u_d||^2 + rho/2 ||grad(y_h - y_d)||^2
    s.t. u_h = w_h + y_h solves the two-level Stokes system,
         y_a <= y_h(z) <= y_b at control vertices z.

Its KKT conditions are written as one symmetric sparse matrix in the
primal unknowns ``(w, y, p)`` and the multipliers ``(phi, s)`` with
``s = -r``.  A PDAS iteration fixes y at the bound on the active DOFs,
solves the remaining equality system, and reads the bound multiplier ``mu``
off the control stationarity rows:

    rho a(y - y_d, x) - a(x, phi) + b(x, r) + (u - u_d, x) = mu^T x.

``mu > 0`` only where the lower bound is active, ``mu < 0`` only at the
upper bound.
"""

import itertools
import logging
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
from scipy import sparse as sp

from .assembly import assemble_gradient_load, assemble_load
from .fespace import ControlBounds
from .manufactured import h1_seminorm_error, l2_vector_error
from .quadrature import triangle_quadrature
from .stokes import factorize, pressure_basis, refined_solve

log = logging.getLogger(__name__)


class ActiveState(IntEnum):
    INACTIVE = 0
    LOWER = 1
    UPPER = 2


@dataclass
class ControlProblemData:
    """
    Data of one control problem.  Callables map (n, 2) points to (n, 2)
    values; ``y_d_grad`` returns (n, 2, 2).  ``None`` means zero.
    """

    rho: float
    bounds: ControlBounds
    f: object = None
    u_d: object = None
    y_d: object = None
    y_d_grad: object = None

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if (self.y_d is None) != (self.y_d_grad is None):
            raise ValueError("y_d needs its gradient (and vice versa)")

    def scaled(self, s):
        """Data with ``f, u_d, y_d`` and the bounds multiplied by ``s``."""
        def sc(g):
            return None if g is None else (lambda x: s * np.asarray(g(x)))
        return ControlProblemData(self.rho, self.bounds.scaled(s), sc(self.f),
                                  sc(self.u_d), sc(self.y_d),
                                  sc(self.y_d_grad))

    @classmethod
    def from_case(cls, case):
        return cls(case.rho, case.bounds, case.f, case.u_d, case.y_d,
                   case.grad_y_d)


@dataclass
class DiscreteData:
    """Loads of one problem on one pair of spaces."""

    f_load: np.ndarray        # (f, phi_i)
    ud_load: np.ndarray       # (u_d, phi_i)
    yd_stiff: np.ndarray      # a(y_d, phi_i)
    lower: np.ndarray         # bounds at control DOFs
    upper: np.ndarray
    # optional linear term: the cost gains -control_load . y
    control_load: np.ndarray = None

    def __post_init__(self):
        if self.control_load is None:
            self.control_load = np.zeros_like(self.f_load)


def discretize_data(data, spaces, quad=None):
    quad = quad or triangle_quadrature(6)
    zero = np.zeros(spaces.ndof)
    f_load = zero if data.f is None else assemble_load(data.f, spaces, quad)
    ud_load = zero if data.u_d is None else assemble_load(data.u_d, spaces,
                                                          quad)
    yd = zero if data.y_d_grad is None else assemble_gradient_load(
        data.y_d_grad, spaces, quad)
    data.bounds.check_compatible(has_pinned_boundary=spaces.q_pinned.size > 0)
    lo, up = data.bounds.arrays(spaces.control)
    return DiscreteData(f_load, ud_load, yd, lo, up)


@dataclass(frozen=True)
class PDASConfig:
    c: float = 1.0
    max_iter: int = 50
    tol: float = 1e-10
    warm_start: object = None     # initial ActiveSets, e.g. from a coarser run

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("PDAS constant c must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass
class OptimalSolution:
    """Fields on the full velocity layout, coarse pressures, multipliers."""

    w: np.ndarray
    p: np.ndarray
    phi: np.ndarray
    r: np.ndarray
    y: np.ndarray
    mu: np.ndarray                # at control DOFs
    active: np.ndarray            # ActiveState per control DOF
    iterations: int = 0
    converged: bool = True
    cost: float = float("nan")
    residual: float = 0.0
    history: list = field(default_factory=list)

    @property
    def u(self):
        return self.w + self.y


class KKTSystem:
    """
    Full symmetric KKT matrix of one problem, before active-set reduction.

    Unknown blocks in order: ``w`` (V-free), ``y`` (Q-free), ``p`` and
    ``phi`` (V-free), ``s = -r``, with both pressures in the coordinates of
    :func:`~stokes_control.stokes.pressure_basis`.  The first block row
    group is the Lagrangian gradient in the primal unknowns; the second is
    the negated state constraint, which makes the matrix symmetric.
    """

    def __init__(self, spaces, ops, rho, ddata):
        self.spaces = spaces
        self.ops = ops
        self.rho = rho
        self.ddata = ddata
        V, Q = spaces.v_free, spaces.q_free
        A, M = ops.A, ops.M
        self.Z = pressure_basis(spaces)
        B = (self.Z.T @ ops.B).tocsr()
        nv, nq, npr = V.size, Q.size, self.Z.shape[1]
        self.sizes = dict(w=nv, y=nq, p=npr, phi=nv, s=npr)
        off, k = {}, 0
        for name in ("w", "y", "p", "phi", "s"):
            off[name] = k
            k += self.sizes[name]
        self.offsets = off
        self.n = k

        def sub(mat, rows, cols):
            return mat[rows][:, cols]

        H = sp.bmat([[sub(M, V, V), sub(M, V, Q)],
                     [sub(M, Q, V), sub(M, Q, Q) + rho * sub(A, Q, Q)]])
        H = sp.block_diag([H, sp.csr_matrix((npr, npr))])
        # constraint Jacobian: momentum, divergence
        C = sp.bmat([[sub(A, V, V), sub(A, V, Q), B[:, V].T],
                     [B[:, V], B[:, Q], None]])
        self.K = sp.bmat([[H, -C.T], [-C, None]], format="csc")
        self.npri = nv + nq + npr
        # rhs: Lagrangian gradient constants and negated constraint rhs
        rhs = np.zeros(self.n)
        rhs[off["w"]:off["w"] + nv] = ddata.ud_load[V]
        rhs[off["y"]:off["y"] + nq] = (ddata.ud_load[Q] + rho * ddata.yd_stiff[Q]
                                      + ddata.control_load[Q])
        rhs[off["phi"]:off["phi"] + nv] = -ddata.f_load[V]
        self.rhs = rhs
        # position of each control DOF inside the y block
        self.control_pos = off["y"] + np.searchsorted(Q, spaces.control)

    def reduced(self, active, lower, upper):
        """
        Eliminate the active control DOFs (fixed at their bounds).

        Returns ``(K_red, rhs_red, keep, fixed_idx, fixed_vals)``.
        """
        act = active != ActiveState.INACTIVE
        fixed_idx = self.control_pos[act]
        fixed_vals = np.where(active[act] == ActiveState.LOWER, lower[act],
                              upper[act])
        keep = np.setdiff1d(np.arange(self.n), fixed_idx)
        K_red = self.K[:, keep][keep]
        rhs = self.rhs.copy()
        if fixed_idx.size:
            rhs -= self.K[:, fixed_idx] @ fixed_vals
        return K_red.tocsc(), rhs[keep], keep, fixed_idx, fixed_vals

    def full_vector(self, x_red, keep, fixed_idx, fixed_vals):
        x = np.zeros(self.n)
        x[keep] = x_red
        x[fixed_idx] = fixed_vals
        return x

    def multipliers(self, x):
        """``mu`` at control DOFs: residual of the control stationarity rows."""
        resid = self.K @ x - self.rhs
        return resid[self.control_pos]

    def unpack(self, x):
        sp_ = self.spaces
        o, s = self.offsets, self.sizes

        def blk(name):
            return x[o[name]:o[name] + s[name]]

        w = np.zeros(sp_.ndof)
        w[sp_.v_free] = blk("w")
        y = np.zeros(sp_.ndof)
        y[sp_.q_free] = blk("y")
        phi = np.zeros(sp_.ndof)
        phi[sp_.v_free] = blk("phi")
        return w, y, self.Z @ blk("p"), phi, -(self.Z @ blk("s"))


def assemble_kkt(data, spaces, ops, active=None, quad=None, ddata=None):
    """
    Active-set reduced KKT system.

    Returns ``(kkt, K_red, rhs_red, keep, fixed_idx, fixed_vals)``; ``kkt``
    is the unreduced :class:`KKTSystem`.
    """
    ddata = ddata or discretize_data(data, spaces, quad)
    kkt = KKTSystem(spaces, ops, data.rho, ddata)
    if active is None:
        active = np.zeros(spaces.control.size, dtype=np.int8)
    return (kkt,) + kkt.reduced(np.asarray(active), ddata.lower, ddata.upper)


def _solve_sparse(K, rhs, tol):
    return refined_solve(factorize(K), K, rhs, tol)


def update_active(mu, y, lower, upper, c):
    """Semismooth-Newton active-set prediction; ties stay inactive."""
    new = np.full(mu.shape, ActiveState.INACTIVE, dtype=np.int8)
    new[mu + c * (upper - y) < 0] = ActiveState.UPPER
    new[mu + c * (lower - y) > 0] = ActiveState.LOWER
    return new


def pdas_solve(data, spaces, ops, config=None, quad=None, ddata=None,
               _flip_multiplier=False):
    """
    Primal-dual active-set solution of the discrete optimality system.

    Starts from all-inactive (or ``config.warm_start``) and stops when the
    active sets repeat.  On hitting ``max_iter`` the last iterate is
    returned with ``converged=False``.
    """
    config = config or PDASConfig()
    quad = quad or triangle_quadrature(6)
    ddata = ddata or discretize_data(data, spaces, quad)
    kkt = KKTSystem(spaces, ops, data.rho, ddata)
    lo, up = ddata.lower, ddata.upper
    nc = spaces.control.size
    active = (np.zeros(nc, dtype=np.int8) if config.warm_start is None
              else np.asarray(config.warm_start, dtype=np.int8).copy())
    history = []
    converged = False
    for it in range(1, config.max_iter + 1):
        K, rhs, keep, fidx, fval = kkt.reduced(active, lo, up)
        x_red, res = _solve_sparse(K, rhs, config.tol)
        x = kkt.full_vector(x_red, keep, fidx, fval)
        mu = kkt.multipliers(x)
        if _flip_multiplier:
            mu = -mu
        y_ctrl = x[kkt.control_pos]
        new = update_active(mu, y_ctrl, lo, up, config.c)
        w, y, p, phi, r = kkt.unpack(x)
        sol = OptimalSolution(w, p, phi, r, y, mu, active.copy(), it,
                              False, residual=res)
        cost = evaluate_cost(sol.u, y, data, spaces, quad)
        history.append(dict(iter=it,
                            lower=int(np.sum(active == ActiveState.LOWER)),
                            upper=int(np.sum(active == ActiveState.UPPER)),
                            stationarity=stationarity_residual(sol, data, ops,
                                                               spaces, ddata),
                            cost=cost))
        log.debug("pdas iter %d: |A-|=%d |A+|=%d cost=%.6e", it,
                  history[-1]["lower"], history[-1]["upper"], cost)
        if np.array_equal(new, active):
            converged = True
            break
        active = new
    sol.converged = converged
    sol.cost = cost
    sol.history = history
    sol.iterations = it
    if not converged:
        log.warning("PDAS did not converge in %d iterations", config.max_iter)
    return sol


def _stationarity_terms(sol, data, ops, spaces, ddata):
    A, M, B = ops.A, ops.M, ops.B
    yd_term = ddata.yd_stiff
    terms = [data.rho * (A @ sol.y - yd_term),
             -(A @ sol.phi),
             B.T @ sol.r,
             M @ sol.u - ddata.ud_load,
             -ddata.control_load]
    mu_full = np.zeros(spaces.ndof)
    mu_full[spaces.control] = sol.mu
    return terms, mu_full


def stationarity_residual(sol, data, ops, spaces, ddata=None):
    """
    ``max_x |rho a(y-y_d,x) - a(x,phi) + b(x,r) + (u-u_d,x) - mu^T x|`` over
    the Q_h basis, divided by the largest individual term.
    """
    ddata = ddata or discretize_data(data, spaces)
    terms, mu_full = _stationarity_terms(sol, data, ops, spaces, ddata)
    q = spaces.q_free
    total = sum(terms) - mu_full
    scale = max(max(np.abs(t[q]).max(initial=0.0) for t in terms),
                np.abs(mu_full).max(initial=0.0), np.finfo(float).tiny)
    return float(np.abs(total[q]).max(initial=0.0) / scale)


def vi_residual(sol, x, data, ops, spaces, ddata=None, atol=1e-12):
    """
    ``rho a(y-y_d, x-y) - a(x-y, phi) + b(x-y, r) + (u-u_d, x-y)`` for a
    feasible control ``x`` (full layout).  Nonnegative at the optimum.
    """
    ddata = ddata or discretize_data(data, spaces)
    x = np.asarray(x, float)
    xc = x[spaces.control]
    if (np.any(xc < ddata.lower - atol) or np.any(xc > ddata.upper + atol)
            or np.any(np.abs(x[spaces.q_pinned]) > atol)):
        raise ValueError("test control is not feasible")
    terms, _ = _stationarity_terms(sol, data, ops, spaces, ddata)
    d = x - sol.y
    return float(sum(t @ d for t in terms))


def evaluate_cost(u, y, data, spaces, quad=None):
    """``1/2 ||u - u_d||^2 + rho/2 ||grad(y - y_d)||^2`` by quadrature."""
    quad = quad or triangle_quadrature(6)
    mesh = spaces.mesh
    zero = (lambda x: np.zeros(np.shape(x)[:-1] + (2,)))
    zgrad = (lambda x: np.zeros(np.shape(x)[:-1] + (2, 2)))
    e_u = l2_vector_error(u, data.u_d or zero, mesh, quad)
    e_y = h1_seminorm_error(y, data.y_d_grad or zgrad, mesh, quad)
    return 0.5 * e_u ** 2 + 0.5 * data.rho * e_y ** 2


BRUTE_FORCE_MAX_DOFS = 10


def brute_force_solve(data, spaces, ops, quad=None, ddata=None, tol=1e-9,
                      chunk=2048):
    """
    Enumerate every active-set assignment and keep the sign-feasible ones.

    Each assignment is solved as an equality KKT system with ``y`` and
    ``mu`` both unknown (``y_i = bound`` on active DOFs, ``mu_i = 0`` on
    inactive ones), so all systems have the same size and are solved in
    dense batches.  Raises if zero or several assignments survive.
    """
    nc = spaces.control.size
    if nc > BRUTE_FORCE_MAX_DOFS:
        raise ValueError("brute force limited to {} scalar control DOFs "
                         "(got {})".format(BRUTE_FORCE_MAX_DOFS, nc))
    quad = quad or triangle_quadrature(6)
    ddata = ddata or discretize_data(data, spaces, quad)
    kkt = KKTSystem(spaces, ops, data.rho, ddata)
    lo, up = ddata.lower, ddata.upper
    n = kkt.n
    base = np.zeros((n + nc, n + nc))
    base[:n, :n] = kkt.K.toarray()
    base[kkt.control_pos, n + np.arange(nc)] = -1.0
    rhs0 = np.concatenate([kkt.rhs, np.zeros(nc)])
    assignments = np.array(list(itertools.product((0, 1, 2), repeat=nc)),
                           dtype=np.int8).reshape(-1, nc)
    survivors = []
    rows = n + np.arange(nc)
    for start in range(0, len(assignments), chunk):
        asg = assignments[start:start + chunk]
        m = len(asg)
        mats = np.broadcast_to(base, (m,) + base.shape).copy()
        rhs = np.broadcast_to(rhs0, (m, n + nc)).copy()
        act = asg != ActiveState.INACTIVE
        # active: y_i = bound; inactive: mu_i = 0
        for i in range(nc):
            mats[act[:, i], rows[i], kkt.control_pos[i]] = 1.0
            mats[~act[:, i], rows[i], n + i] = 1.0
            rhs[:, rows[i]] = np.where(asg[:, i] == ActiveState.LOWER, lo[i],
                                       np.where(asg[:, i] == ActiveState.UPPER,
                                                up[i], 0.0))
        X = np.linalg.solve(mats, rhs[..., None])[..., 0]
        y = X[:, kkt.control_pos]
        mu = X[:, n:]
        scale = tol * max(1.0, np.abs(X).max())
        ok = np.ones(m, dtype=bool)
        ina = asg == ActiveState.INACTIVE
        ok &= np.all(~ina | ((y >= lo - scale) & (y <= up + scale)), axis=1)
        ok &= np.all((asg != ActiveState.LOWER) | (mu >= -scale), axis=1)
        ok &= np.all((asg != ActiveState.UPPER) | (mu <= scale), axis=1)
        for k in np.nonzero(ok)[0]:
            survivors.append((asg[k].copy(), X[k, :n].copy(), mu[k].copy()))
    if len(survivors) != 1:
        raise RuntimeError("brute force found {} sign-feasible active sets "
                           "(expected exactly one)".format(len(survivors)))
    asg, x, mu = survivors[0]
    w, y, p, phi, r = kkt.unpack(x)
    sol = OptimalSolution(w, p, phi, r, y, mu, asg, 1, True)
    sol.cost = evaluate_cost(sol.u, y, data, spaces, quad)
    return sol
