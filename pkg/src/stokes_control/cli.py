"""
Command-line front end.

    stokes-control study  --example square --levels 2..6 --out results
    stokes-control solve  --example lshape --level 3 --out fields
    stokes-control verify

Exit codes: 0 success, 1 failed verification check, 2 usage error,
3 PDAS not converged, 4 singular linear system.
"""

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import __version__
from .assembly import assemble_operators
from .fespace import ControlBounds, build_spaces
from .io import (write_cell_csv, write_control_vtk, write_history_csv,
                 write_mesh_vtk, write_point_csv, write_solution_vtk)
from .manufactured import (TABLE_FAMILIES, compute_errors, eoc, make_case,
                           report_csv, report_table)
from .mesh import build_two_level, level_to_n
from .optimizer import ControlProblemData, PDASConfig, pdas_solve
from .quadrature import triangle_quadrature
from .stokes import SingularSystemError
from .verify import run_checks

log = logging.getLogger("stokes_control")

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_PDAS, EXIT_SINGULAR = 0, 1, 2, 3, 4
FORMATS = ("csv", "table", "vtk")


class PDASFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class StudyConfig:
    example: str
    levels: tuple
    rho: float = None
    lower: tuple = None
    upper: tuple = None
    pdas: PDASConfig = PDASConfig()
    quad_degree: int = 6
    out: str = "results"
    formats: tuple = ("csv", "table")
    zero_data: bool = False

    def __post_init__(self):
        make_case(self.example)
        if not self.levels:
            raise ValueError("at least one level is required")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ValueError("levels must be strictly increasing")
        if min(self.levels) < 1:
            raise ValueError("levels start at 1")
        if self.rho is not None and not self.rho > 0:
            raise ValueError("--rho must be positive")
        bad = set(self.formats) - set(FORMATS)
        if bad:
            raise ValueError("unknown format(s): " + ", ".join(sorted(bad)))
        triangle_quadrature(self.quad_degree)

    def problem_data(self, case):
        data = ControlProblemData.from_case(case)
        if self.zero_data:
            data = ControlProblemData(data.rho, data.bounds)
        lo = self.lower if self.lower is not None else case.bounds.lower
        up = self.upper if self.upper is not None else case.bounds.upper
        return replace(data, rho=self.rho if self.rho is not None else data.rho,
                       bounds=ControlBounds(tuple(lo), tuple(up)))


def solve_level(config, level):
    """Mesh, assemble and solve one level; returns ``(case, mesh, sol)``."""
    case = make_case(config.example)
    mesh = build_two_level(case.domain, level_to_n(config.example, level))
    spaces = build_spaces(mesh)
    ops = assemble_operators(spaces)
    data = config.problem_data(case)
    quad = triangle_quadrature(config.quad_degree)
    sol = pdas_solve(data, spaces, ops, config.pdas, quad=quad)
    if not sol.converged:
        raise PDASFailure("PDAS did not converge on level {} within {} "
                          "iterations".format(level, config.pdas.max_iter))
    return case, mesh, spaces, data, sol


def _study_row(config, level):
    case, mesh, _, _, sol = solve_level(config, level)
    row = compute_errors(sol, case, mesh, triangle_quadrature(config.quad_degree))
    return row, sol.iterations, sol.cost


def run_study(config, jobs=1):
    """Error rows (with orders) for every level of ``config``."""
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            out = list(pool.map(_study_row, [config] * len(config.levels),
                                config.levels))
    else:
        out = [_study_row(config, lv) for lv in config.levels]
    for lv, (row, it, cost) in zip(config.levels, out):
        log.info("level %d: h=%.4f, %d PDAS iterations, cost %.6e", lv,
                 row.h, it, cost)
    return eoc([r for r, _, _ in out])


def cmd_study(config, jobs=1):
    rows = run_study(config, jobs)
    os.makedirs(config.out, exist_ok=True)
    written = []
    stem = os.path.join(config.out, config.example)
    for family in TABLE_FAMILIES:
        if "csv" in config.formats:
            path = "{}_{}.csv".format(stem, family)
            with open(path, "w", newline="\n") as fh:
                fh.write(report_csv(rows, family))
            written.append(path)
        if "table" in config.formats:
            path = "{}_{}.txt".format(stem, family)
            text = report_table(rows, family)
            with open(path, "w", newline="\n") as fh:
                fh.write(text)
            written.append(path)
            print("{} ({})".format(family, config.example))
            print(text)
    if "vtk" in config.formats:
        for lv in config.levels:
            _, mesh, _, _, sol = solve_level(config, lv)
            written += _dump_fields(mesh, sol, "{}_level{}".format(stem, lv),
                                    ("vtk",))
    return written


def _dump_fields(mesh, sol, prefix, formats):
    written = []
    if "csv" in formats:
        written.append(write_point_csv(sol, mesh, prefix + "_points.csv"))
        written.append(write_cell_csv(sol, mesh, prefix + "_cells.csv"))
    if "vtk" in formats:
        written.append(write_solution_vtk(sol, mesh, prefix + "_solution.vtk"))
        written.append(write_control_vtk(sol, mesh, prefix + "_control.vtk"))
        written += write_mesh_vtk(mesh, prefix + "_mesh")
    return written


def cmd_solve(config):
    level = config.levels[0]
    case, mesh, spaces, data, sol = solve_level(config, level)
    prefix = os.path.join(config.out, "{}_level{}".format(config.example, level))
    formats = tuple(f for f in config.formats if f in ("csv", "vtk")) or ("csv",)
    written = _dump_fields(mesh, sol, prefix, formats)
    written.append(write_history_csv(sol.history, prefix + "_pdas.csv"))
    h, H = mesh.h, mesh.H
    print("example {} level {}: h={:.4f} H={:.4f} spacing={:.4f}".format(
        config.example, level, h, H, mesh.fine.spacing))
    print("control DOFs {}, lower-active {}, upper-active {}".format(
        spaces.control.size, int(np.sum(sol.active == 1)),
        int(np.sum(sol.active == 2))))
    print("PDAS iterations {}".format(sol.iterations))
    print("cost {!r}".format(sol.cost))
    print("stationarity residual {:.3e}".format(sol.history[-1]["stationarity"]))
    print("linear residual {:.3e}".format(sol.residual))
    return written


def cmd_verify(levels, flip_multiplier=False):
    results = run_checks(levels, flip_multiplier=flip_multiplier)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    if failed:
        print("{} check(s) failed: {}".format(len(failed), "; ".join(failed)))
        return EXIT_CHECK
    print("all {} checks passed".format(len(results)))
    return EXIT_OK


def parse_levels(text):
    """``'2..6'``, ``'2,3,5'`` or ``'4'``."""
    text = text.strip()
    if ".." in text:
        a, b = text.split("..")
        return tuple(range(int(a), int(b) + 1))
    return tuple(int(t) for t in text.split(",") if t.strip())


def parse_pair(text):
    vals = tuple(float(t) for t in text.split(","))
    if len(vals) != 2:
        raise argparse.ArgumentTypeError("expected two comma-separated numbers")
    return vals


def _common(p):
    p.add_argument("--example", default="square",
                   help="square | lshape (default: square)")
    p.add_argument("--rho", type=float, help="regularization (default: 1e-2)")
    p.add_argument("--ya", type=parse_pair, help="lower bound 'a1,a2'")
    p.add_argument("--yb", type=parse_pair, help="upper bound 'b1,b2'")
    p.add_argument("--pdas-c", type=float, default=1.0)
    p.add_argument("--pdas-max-iter", type=int, default=50)
    p.add_argument("--tol", type=float, default=1e-10,
                   help="relative residual tolerance of the linear solves")
    p.add_argument("--quad-degree", type=int, default=6)
    p.add_argument("--out", default="results")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    ap = argparse.ArgumentParser(
        prog="stokes-control",
        description="Two-level FEM for Stokes Dirichlet boundary control "
                    "with control constraints.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    st = sub.add_parser("study", help="convergence study over mesh levels")
    _common(st)
    st.add_argument("--levels", default=None,
                    help="e.g. 2..6 (default: 2..6 square, 1..5 lshape)")
    st.add_argument("--format", default="csv,table",
                    help="comma list of csv, table, vtk")
    st.add_argument("--jobs", type=int, default=1,
                    help="run levels in parallel processes")

    so = sub.add_parser("solve", help="single solve with field dumps")
    _common(so)
    so.add_argument("--level", type=int, default=3)
    so.add_argument("--format", default="csv,vtk")
    so.add_argument("--zero-data", action="store_true",
                    help="set f, u_d and y_d to zero")

    ve = sub.add_parser("verify", help="oracle and invariant checks")
    ve.add_argument("--levels", default="1..3")
    ve.add_argument("--inject-fault", choices=["mu-sign"],
                    help="test hook: flip the multiplier sign inside PDAS")
    ve.add_argument("-v", "--verbose", action="store_true")
    return ap


def _config(args, levels):
    return StudyConfig(
        example=args.example, levels=levels, rho=args.rho, lower=args.ya,
        upper=args.yb,
        pdas=PDASConfig(c=args.pdas_c, max_iter=args.pdas_max_iter,
                        tol=args.tol),
        quad_degree=args.quad_degree, out=args.out,
        formats=tuple(f.strip() for f in args.format.split(",") if f.strip()),
        zero_data=getattr(args, "zero_data", False))


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "verify":
            return cmd_verify(parse_levels(args.levels),
                              flip_multiplier=args.inject_fault == "mu-sign")
        if args.command == "study":
            levels = (parse_levels(args.levels) if args.levels else
                      (tuple(range(2, 7)) if args.example in ("square",
                                                              "unit-square-example")
                       else tuple(range(1, 6))))
            config = _config(args, levels)
            written = cmd_study(config, jobs=max(1, args.jobs))
        else:
            config = _config(args, (args.level,))
            written = cmd_solve(config)
    except ValueError as exc:
        print("error: {}".format(exc), file=sys.stderr)
        return EXIT_USAGE
    except PDASFailure as exc:
        print("error: {}".format(exc), file=sys.stderr)
        return EXIT_PDAS
    except SingularSystemError as exc:
        print("error: {}".format(exc), file=sys.stderr)
        return EXIT_SINGULAR
    print("manifest:")
    for path in written:
        print("  " + path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
