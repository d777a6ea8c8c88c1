"""
Closed-form test cases and error/EOC reporting.

Vector fields take an (n, 2) array of points and return (n, 2); gradients
return (n, 2, 2) indexed ``[point, component, derivative]``.  The body force
``f = -lap u + grad p`` and target ``u_d = u + lap phi + grad r`` are
differentiated by hand; the test suite checks them against finite
differences.
"""

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import (assemble_gradient_load, assemble_load,
                       assemble_pressure_load, element_geometry)
from .fespace import ControlBounds, p1_gradients
from .mesh import make_domain
from .quadrature import triangle_quadrature

TWO_PI = 2 * np.pi


def _xy(x):
    x = np.asarray(x, float)
    return x[..., 0], x[..., 1]


# -- building blocks --------------------------------------------------------

class ExpField:
    """``u = (-e^x (y cos y + sin y), e^x y sin y)``, divergence free."""

    @staticmethod
    def value(x):
        a, b = _xy(x)
        ex = np.exp(a)
        return np.stack([-ex * (b * np.cos(b) + np.sin(b)),
                         ex * b * np.sin(b)], axis=-1)

    @staticmethod
    def grad(x):
        a, b = _xy(x)
        ex = np.exp(a)
        u1 = -ex * (b * np.cos(b) + np.sin(b))
        u2 = ex * b * np.sin(b)
        return np.stack([
            np.stack([u1, -ex * (2 * np.cos(b) - b * np.sin(b))], axis=-1),
            np.stack([u2, ex * (np.sin(b) + b * np.cos(b))], axis=-1),
        ], axis=-2)

    @staticmethod
    def laplacian(x):
        a, b = _xy(x)
        ex = np.exp(a)
        return np.stack([2 * ex * np.sin(b), 2 * ex * np.cos(b)], axis=-1)


class SwirlField:
    """
    ``(sin^2(wx) sin(wy) cos(wy), -sin^2(wy) sin(wx) cos(wx))``.

    Divergence free and zero wherever ``wx`` or ``wy`` is a multiple of pi.
    """

    def __init__(self, omega):
        self.w = omega

    def value(self, x):
        a, b = _xy(x)
        w = self.w
        return np.stack([0.25 * (1 - np.cos(2 * w * a)) * np.sin(2 * w * b),
                         -0.25 * (1 - np.cos(2 * w * b)) * np.sin(2 * w * a)],
                        axis=-1)

    def grad(self, x):
        a, b = _xy(x)
        w = self.w
        s2a, s2b = np.sin(2 * w * a), np.sin(2 * w * b)
        c2a, c2b = np.cos(2 * w * a), np.cos(2 * w * b)
        return 0.5 * w * np.stack([
            np.stack([s2a * s2b, (1 - c2a) * c2b], axis=-1),
            np.stack([-(1 - c2b) * c2a, -s2a * s2b], axis=-1),
        ], axis=-2)

    def laplacian(self, x):
        a, b = _xy(x)
        w = self.w
        s2a, s2b = np.sin(2 * w * a), np.sin(2 * w * b)
        c2a, c2b = np.cos(2 * w * a), np.cos(2 * w * b)
        return w * w * np.stack([s2b * (2 * c2a - 1), -s2a * (2 * c2b - 1)],
                                axis=-1)


class SineProduct:
    """``sin(2 pi x) sin(2 pi y)``."""

    @staticmethod
    def value(x):
        a, b = _xy(x)
        return np.sin(TWO_PI * a) * np.sin(TWO_PI * b)

    @staticmethod
    def grad(x):
        a, b = _xy(x)
        return TWO_PI * np.stack([np.cos(TWO_PI * a) * np.sin(TWO_PI * b),
                                  np.sin(TWO_PI * a) * np.cos(TWO_PI * b)],
                                 axis=-1)


# -- exact cases ------------------------------------------------------------

@dataclass
class ExactCase:
    """Exact optimal fields with the data derived from them."""

    name: str
    domain: object
    rho: float
    bounds: ControlBounds
    velocity: object          # object with value/grad/laplacian
    pressure: object          # object with value/grad
    adjoint: object
    adjoint_pressure: object

    def u(self, x):
        return self.velocity.value(x)

    def grad_u(self, x):
        return self.velocity.grad(x)

    def p(self, x):
        return self.pressure.value(x)

    def phi(self, x):
        return self.adjoint.value(x)

    def grad_phi(self, x):
        return self.adjoint.grad(x)

    def r(self, x):
        return self.adjoint_pressure.value(x)

    # the optimal control is the trace-carrying velocity itself
    y = u
    grad_y = grad_u
    y_d = u
    grad_y_d = grad_u

    def f(self, x):
        return -self.velocity.laplacian(x) + self.pressure.grad(x)

    def u_d(self, x):
        return (self.velocity.value(x) + self.adjoint.laplacian(x)
                + self.adjoint_pressure.grad(x))


def make_case(example):
    """
    Exact solution of one of the two benchmark problems.

    ``'square'``: unit square, exponential velocity, ``rho = 1e-2``, bounds
    ``(-4, 0) <= y <= (0, 2.5)``.  ``'lshape'``: L-shaped domain, swirl
    velocity, double-frequency adjoint, bounds ``+-0.6``.
    """
    if example in ("square", "unit-square-example"):
        return ExactCase("square", make_domain("unit-square-example"), 1e-2,
                         ControlBounds((-4.0, 0.0), (0.0, 2.5)),
                         ExpField(), SineProduct(), SwirlField(np.pi),
                         SineProduct())
    if example in ("lshape", "l-shape-example"):
        return ExactCase("lshape", make_domain("l-shape-example"), 1e-2,
                         ControlBounds((-0.6, -0.6), (0.6, 0.6)),
                         SwirlField(np.pi), SineProduct(),
                         SwirlField(2 * np.pi), SineProduct())
    raise ValueError("unknown example {!r}; use 'square' or 'lshape'"
                     .format(example))


def exact_multiplier_load(case, spaces, quad=None):
    """
    ``-a(phi, x_i) + b(x_i, r) + (u - u_d, x_i)`` for the exact fields.

    For a basis function ``x_i`` this is the boundary functional
    ``-int (d phi/dn + r n) . x_i``, i.e. the multiplier that the exact
    fields would need at the control boundary.  It is nonzero for both
    benchmark cases, so their exact fields do not solve the constrained
    problem as posed.  Passing it as ``DiscreteData.control_load`` gives a
    consistent variant whose optimum is the exact solution.
    """
    quad = quad or triangle_quadrature(6)
    return (-assemble_gradient_load(case.grad_phi, spaces, quad)
            + assemble_pressure_load(case.r, spaces, quad)
            + assemble_load(lambda x: case.u(x) - case.u_d(x), spaces, quad))


# -- errors -----------------------------------------------------------------

def _fine_quadrature(mesh, quad):
    area, _ = element_geometry(mesh.fine)
    xq = quad.physical_points(mesh.fine.vertices[mesh.fine.triangles])
    return area, xq


def h1_seminorm_error(coefs, grad_exact, mesh, quad=None):
    """``||grad(v - v_h)||_0`` for a vector P1 coefficient vector."""
    quad = quad or triangle_quadrature(6)
    area, xq = _fine_quadrature(mesh, quad)
    nt, nq = xq.shape[:2]
    ge = np.asarray(grad_exact(xq.reshape(-1, 2))).reshape(nt, nq, 2, 2)
    gh = p1_gradients(coefs, mesh)
    d2 = ((ge - gh[:, None]) ** 2).sum(axis=(2, 3))
    return math.sqrt(float(np.sum(area * (d2 @ quad.weights))))


def l2_vector_error(coefs, exact, mesh, quad=None):
    """``||v - v_h||_0`` for a vector P1 coefficient vector."""
    quad = quad or triangle_quadrature(6)
    area, xq = _fine_quadrature(mesh, quad)
    nt, nq = xq.shape[:2]
    ve = np.asarray(exact(xq.reshape(-1, 2))).reshape(nt, nq, 2)
    vals = np.asarray(coefs).reshape(-1, 2)[mesh.fine.triangles]
    vh = np.einsum("qi,tic->tqc", quad.points, vals)
    d2 = ((ve - vh) ** 2).sum(axis=2)
    return math.sqrt(float(np.sum(area * (d2 @ quad.weights))))


def l2_pressure_error(p_coarse, exact, mesh, quad=None, align_mean=True):
    """
    ``||p - p_H||_0`` for a coarse P0 field, after shifting ``p_H`` so both
    have the same integral over the domain.
    """
    quad = quad or triangle_quadrature(6)
    area, xq = _fine_quadrature(mesh, quad)
    nt, nq = xq.shape[:2]
    pe = np.asarray(exact(xq.reshape(-1, 2))).reshape(nt, nq)
    ph = np.asarray(p_coarse, float)[mesh.parent]
    if align_mean:
        total = area.sum()
        shift = (np.sum(area * (pe @ quad.weights)) - np.sum(area * ph)) / total
        ph = ph + shift
    d2 = (pe - ph[:, None]) ** 2
    return math.sqrt(float(np.sum(area * (d2 @ quad.weights))))


ERROR_KEYS = ("u", "p", "phi", "r", "y")


@dataclass
class ErrorRow:
    h: float
    H: float
    spacing: float
    errors: dict
    orders: dict = field(default_factory=dict)


def compute_errors(solution, case, mesh, quad=None):
    """Energy and pressure errors of one discrete solution."""
    quad = quad or triangle_quadrature(6)
    errors = {
        "u": h1_seminorm_error(solution.u, case.grad_u, mesh, quad),
        "p": l2_pressure_error(solution.p, case.p, mesh, quad),
        "phi": h1_seminorm_error(solution.phi, case.grad_phi, mesh, quad),
        "r": l2_pressure_error(solution.r, case.r, mesh, quad),
        "y": h1_seminorm_error(solution.y, case.grad_y, mesh, quad),
    }
    return ErrorRow(mesh.h, mesh.H, mesh.fine.spacing, errors)


def eoc(rows, size="spacing"):
    """
    Fill the ``orders`` of each row: ``log(e_prev / e) / log(h_prev / h)``,
    zero on the first row.
    """
    if len(rows) < 1:
        raise ValueError("need at least one row")
    hs = [getattr(r, size) for r in rows]
    if any(b >= a for a, b in zip(hs, hs[1:])):
        raise ValueError("mesh sizes must be strictly decreasing")
    for k, row in enumerate(rows):
        row.orders = {}
        for key, e in row.errors.items():
            if k == 0:
                row.orders[key] = 0.0
                continue
            prev = rows[k - 1].errors[key]
            if prev == e:
                row.orders[key] = 0.0
            elif prev <= 0 or e <= 0:
                row.orders[key] = float("nan")
            else:
                row.orders[key] = (math.log(prev / e)
                                   / math.log(hs[k - 1] / hs[k]))
    return rows


TABLE_FAMILIES = {
    "state": ("u", "p"),
    "adjoint": ("phi", "r"),
    "control": ("y",),
}

_HEAD = {"u": "err_grad_u", "p": "err_p", "phi": "err_grad_phi",
         "r": "err_r", "y": "err_grad_y"}


def _g6(v):
    return "{:.6g}".format(v)


def report_csv(rows, family):
    """CSV text for one table family; the first line is the schema tag."""
    keys = TABLE_FAMILIES[family]
    buf = io.StringIO()
    buf.write("#schema=1\n")
    w = csv.writer(buf, lineterminator="\n")
    head = ["h", "H", "spacing"]
    for k in keys:
        head += [_HEAD[k], "order_" + k]
    w.writerow(head)
    for r in rows:
        line = [_g6(r.h), _g6(r.H), _g6(r.spacing)]
        for k in keys:
            line += [_g6(r.errors[k]), _g6(r.orders.get(k, 0.0))]
        w.writerow(line)
    return buf.getvalue()


def report_table(rows, family, size="spacing"):
    """Aligned text table, one row per level."""
    keys = TABLE_FAMILIES[family]
    head = ["h", "|grad(u-u_h)|", "order", "H", "|p-p_H|", "order"]
    if family == "adjoint":
        head = ["h", "|grad(phi-phi_h)|", "order", "H", "|r-r_H|", "order"]
    elif family == "control":
        head = ["h", "|grad(y-y_h)|", "order"]
    lines = ["  ".join("{:>18}".format(c) for c in head)]
    for r in rows:
        hval = getattr(r, size)
        Hval = 2 * hval
        cells = ["{:.4f}".format(hval)]
        cells += ["{:.4f}".format(r.errors[keys[0]]),
                  "{:.4f}".format(r.orders.get(keys[0], 0.0))]
        if len(keys) > 1:
            cells += ["{:.4f}".format(Hval),
                      "{:.4f}".format(r.errors[keys[1]]),
                      "{:.4f}".format(r.orders.get(keys[1], 0.0))]
        lines.append("  ".join("{:>18}".format(c) for c in cells))
    return "\n".join(lines) + "\n"
