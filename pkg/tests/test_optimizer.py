import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import cached_setup, cached_solution
from stokes_control.fespace import UNBOUNDED, ControlBounds, interpolate_nodal
from stokes_control.manufactured import (compute_errors, exact_multiplier_load,
                                         h1_seminorm_error)
from stokes_control.optimizer import (BRUTE_FORCE_MAX_DOFS, ActiveState,
                                      ControlProblemData, PDASConfig,
                                      assemble_kkt, brute_force_solve,
                                      discretize_data, evaluate_cost,
                                      pdas_solve, stationarity_residual,
                                      update_active, vi_residual)
from stokes_control.quadrature import triangle_quadrature
from stokes_control.stokes import solve_adjoint, solve_state
from stokes_control.verify import brute_force_gap, random_feasible

BOX = ControlBounds((-1.0, -1.0), (1.0, 1.0))


def solve(st_, data=None, **kw):
    data = data or st_.data
    dd = st_.ddata if data is st_.data else None
    return pdas_solve(data, st_.spaces, st_.ops, ddata=dd, **kw)


def test_kkt_symmetric():
    st_ = cached_setup("square", 1)
    kkt = assemble_kkt(st_.data, st_.spaces, st_.ops, ddata=st_.ddata)[0]
    K = kkt.K
    assert abs(K - K.T).max() <= 1e-13 * abs(K).max()
    st_ = cached_setup("lshape", 2)
    K_red = assemble_kkt(st_.data, st_.spaces, st_.ops, ddata=st_.ddata,
                         active=np.ones(st_.spaces.control.size, np.int8))[1]
    assert abs(K_red - K_red.T).max() <= 1e-13 * abs(K_red).max()


def test_zero_data_gives_zero_solution():
    st_ = cached_setup("square", 4)
    data = ControlProblemData(1e-2, BOX)
    sol = solve(st_, data)
    assert sol.converged and sol.iterations == 1
    for name in ("w", "p", "phi", "r", "y", "mu"):
        assert np.all(getattr(sol, name) == 0), name
    assert sol.cost == 0.0
    assert stationarity_residual(sol, data, st_.ops, st_.spaces) == 0.0
    small = cached_setup("square", 1)
    bf = brute_force_solve(data, small.spaces, small.ops)
    assert np.all(bf.y == 0) and np.all(bf.active == ActiveState.INACTIVE)
    # doubling rho keeps the zero optimum
    assert solve(st_, ControlProblemData(2e-2, BOX)).cost == 0.0


def test_unconstrained_problem_has_zero_multiplier():
    st_ = cached_setup("square", 4)
    data = ControlProblemData(st_.data.rho, UNBOUNDED, st_.data.f,
                              st_.data.u_d, st_.data.y_d, st_.data.y_d_grad)
    sol = solve(st_, data)
    assert sol.converged and sol.iterations == 1
    assert np.all(sol.active == ActiveState.INACTIVE)
    assert np.abs(sol.mu).max() <= 1e-10 * max(1.0, np.abs(sol.y).max())
    # the same as the equality-constrained KKT solved densely
    kkt = assemble_kkt(data, st_.spaces, st_.ops)[0]
    x = np.linalg.solve(kkt.K.toarray(), kkt.rhs)
    _, y, _, phi, _ = kkt.unpack(x)
    assert np.abs(y - sol.y).max() <= 1e-9 * np.abs(y).max()
    assert np.abs(phi - sol.phi).max() <= 1e-9 * np.abs(phi).max()


def test_pinned_bounds_make_every_dof_active():
    st_ = cached_setup("square", 1)
    pinned = ControlBounds((0.0, 0.0), (0.0, 0.0))
    data = ControlProblemData(st_.data.rho, pinned, st_.data.f, st_.data.u_d,
                              st_.data.y_d, st_.data.y_d_grad)
    bf = brute_force_solve(data, st_.spaces, st_.ops)
    assert np.all(bf.active != ActiveState.INACTIVE)
    sol = solve(st_, data)
    assert np.all(sol.y[st_.spaces.control] == 0.0)
    assert np.abs(sol.y - bf.y).max() < 1e-8


def test_fields_consistent_with_stokes_solves():
    st_, sol = cached_solution("lshape", 2)
    s = solve_state(sol.y, st_.ddata.f_load, st_.spaces, st_.ops)
    assert np.abs(s.velocity - sol.u).max() < 1e-10
    assert np.abs(s.pressure - sol.p).max() < 1e-9
    a = solve_adjoint(sol.u, st_.ddata.ud_load, st_.spaces, st_.ops)
    assert np.abs(a.velocity - sol.phi).max() < 1e-10
    assert np.abs(a.pressure - sol.r).max() < 1e-9


def test_pdas_matches_brute_force_on_smallest_mesh():
    gap, same = brute_force_gap(cached_setup("square", 1))
    assert gap <= 1e-8 and same


def test_brute_force_guard():
    st_ = cached_setup("square", 2)
    assert st_.spaces.control.size > BRUTE_FORCE_MAX_DOFS
    with pytest.raises(ValueError):
        brute_force_solve(st_.data, st_.spaces, st_.ops, ddata=st_.ddata)


def test_flipped_multiplier_is_caught():
    gap, same = brute_force_gap(cached_setup("square", 1), flip_multiplier=True)
    assert gap > 1e-3 or not same


def test_converged_solution_properties():
    st_, sol = cached_solution("square", 3)
    lo, up = st_.ddata.lower, st_.ddata.upper
    yc = sol.y[st_.spaces.control]
    low = sol.active == ActiveState.LOWER
    upp = sol.active == ActiveState.UPPER
    # bound rows hold exactly, not to a tolerance
    assert np.array_equal(yc[low], lo[low])
    assert np.array_equal(yc[upp], up[upp])
    assert np.all(yc >= lo) and np.all(yc <= up)
    assert low.any() and upp.any()
    tol = 1e-10 * max(1.0, np.abs(sol.mu).max())
    assert np.all(low[sol.mu > tol]) and np.all(upp[sol.mu < -tol])
    assert np.all(np.abs(sol.mu[~(low | upp)]) <= tol)
    assert stationarity_residual(sol, st_.data, st_.ops, st_.spaces,
                                 st_.ddata) <= 1e-9
    assert sol.history[-1]["stationarity"] <= 1e-9
    assert [h["iter"] for h in sol.history] == list(range(1, sol.iterations + 1))


def test_stationarity_detects_perturbation():
    st_, sol = cached_solution("square", 3)
    q_inner = np.setdiff1d(st_.spaces.q_free, st_.spaces.control)
    bad = type(sol)(**{**sol.__dict__})
    bad.y = sol.y.copy()
    bad.y[q_inner[len(q_inner) // 2]] += 1e-3
    assert stationarity_residual(bad, st_.data, st_.ops, st_.spaces,
                                 st_.ddata) > 1e-6


def test_variational_inequality(rng):
    st_, sol = cached_solution("square", 3)
    sp_, dd = st_.spaces, st_.ddata
    assert vi_residual(sol, sol.y, st_.data, st_.ops, sp_, dd) == 0.0
    for _ in range(20):
        x = random_feasible(sol, sp_, dd, rng)
        assert vi_residual(sol, x, st_.data, st_.ops, sp_, dd) >= -1e-10
    # moving inactive DOFs only is a first-order zero
    inactive = sp_.control[sol.active == ActiveState.INACTIVE]
    free = np.setdiff1d(sp_.q_free, sp_.control)
    x = sol.y.copy()
    x[free[:5]] += 1e-2
    x[inactive[:3]] += 1e-6
    assert abs(vi_residual(sol, x, st_.data, st_.ops, sp_, dd)) <= 1e-9
    bad = sol.y.copy()
    bad[sp_.control[0]] = dd.upper[0] + 1.0
    with pytest.raises(ValueError):
        vi_residual(sol, bad, st_.data, st_.ops, sp_, dd)
    pinned = sol.y.copy()
    pinned[sp_.q_pinned[0]] = 0.5
    with pytest.raises(ValueError):
        vi_residual(sol, pinned, st_.data, st_.ops, sp_, dd)


def test_optimal_cost_is_minimal(rng):
    st_, sol = cached_solution("square", 3)
    sp_, dd = st_.spaces, st_.ddata
    assert sol.cost == pytest.approx(
        evaluate_cost(sol.u, sol.y, st_.data, sp_), rel=1e-14)
    for k in range(20):
        step = random_feasible(sol, sp_, dd, rng) - sol.y
        x = sol.y + 10.0 ** (-(k % 4)) * step      # convex combinations stay feasible
        s = solve_state(x, dd.f_load, sp_, st_.ops)
        assert evaluate_cost(s.velocity, x, st_.data, sp_) >= sol.cost


def test_cost_of_matching_fields_is_zero():
    st_ = cached_setup("square", 2)
    data = ControlProblemData(1e-2, BOX, u_d=lambda x: np.zeros_like(x))
    z = np.zeros(st_.spaces.ndof)
    assert evaluate_cost(z, z, data, st_.spaces) == 0.0
    case = st_.case
    data = ControlProblemData(1e-2, BOX, u_d=case.u, y_d=case.y,
                              y_d_grad=case.grad_y)
    u = interpolate_nodal(case.u, st_.spaces, "full")
    c2 = evaluate_cost(u, u, data, st_.spaces)
    u4 = interpolate_nodal(case.u, cached_setup("square", 8).spaces, "full")
    c8 = evaluate_cost(u4, u4, data, cached_setup("square", 8).spaces)
    assert 0 < c8 < c2      # interpolation error shrinks towards zero


def test_non_convergence_is_flagged(caplog):
    st_ = cached_setup("square", 4)
    with caplog.at_level(logging.WARNING, logger="stokes_control.optimizer"):
        sol = solve(st_, config=PDASConfig(max_iter=1))
    assert not sol.converged and sol.iterations == 1
    assert "did not converge" in caplog.text


def test_warm_start_converges_immediately():
    st_, sol = cached_solution("square", 3)
    again = solve(st_, config=PDASConfig(warm_start=sol.active))
    assert again.converged and again.iterations == 1
    assert np.abs(again.y - sol.y).max() <= 1e-12 * np.abs(sol.y).max()


def test_update_rule_and_ties():
    lo, up = np.array([-1.0, -1.0, -1.0, -1.0]), np.array([1.0, 1.0, 1.0, 1.0])
    y = np.array([-1.0, 1.0, 0.0, -1.0])
    mu = np.array([0.5, -0.5, 0.0, 0.0])
    assert update_active(mu, y, lo, up, 1.0).tolist() == [1, 2, 0, 0]
    # c (lo - y) pulls an infeasible iterate onto the bound
    assert update_active(np.zeros(1), np.array([-2.0]), lo[:1], up[:1], 1.0)[0] == 1


def test_config_and_data_validation():
    with pytest.raises(ValueError):
        PDASConfig(c=0)
    with pytest.raises(ValueError):
        PDASConfig(max_iter=0)
    with pytest.raises(ValueError):
        ControlProblemData(0.0, BOX)
    with pytest.raises(ValueError):
        ControlProblemData(1.0, BOX, y_d=lambda x: x)
    st_ = cached_setup("square", 2)
    with pytest.raises(ValueError):
        discretize_data(ControlProblemData(1.0, ControlBounds((0.5, 0.5),
                                                              (1.0, 1.0))),
                        st_.spaces)


@settings(max_examples=8, deadline=None)
@given(s=st.floats(0.1, 10.0), example=st.sampled_from(["square", "lshape"]))
def test_scaling_property(s, example):
    st_, base = cached_solution(example, 2)
    scaled = solve(st_, st_.data.scaled(s))
    assert np.array_equal(base.active, scaled.active)
    for name in ("u", "p", "phi", "r", "y", "mu"):
        a = s * np.asarray(getattr(base, name))
        b = np.asarray(getattr(scaled, name))
        assert np.abs(a - b).max() <= 1e-9 * np.abs(a).max(), name


@settings(max_examples=8, deadline=None)
@given(c=st.sampled_from([0.1, 1.0, 10.0, 100.0, 1e4]))
def test_pdas_constant_does_not_change_optimum(c):
    # much smaller c lets the active sets cycle on the coarsest meshes
    st_, base = cached_solution("lshape", 1)
    sol = solve(st_, config=PDASConfig(c=c))
    assert sol.converged
    assert np.array_equal(sol.active, base.active)
    assert np.abs(sol.y - base.y).max() <= 1e-10 * np.abs(base.y).max()


def test_consistent_variant_recovers_exact_control():
    # with the boundary stress of the exact fields added as a linear term,
    # the exact control is optimal and the discrete controls converge to it
    q8 = triangle_quadrature(8)
    errs = []
    for n in (8, 16):
        st_ = cached_setup("square", n)
        dd = discretize_data(st_.data, st_.spaces)
        dd.control_load = exact_multiplier_load(st_.case, st_.spaces, q8)
        sol = pdas_solve(st_.data, st_.spaces, st_.ops, ddata=dd)
        assert sol.converged
        assert stationarity_residual(sol, st_.data, st_.ops, st_.spaces, dd) <= 1e-9
        errs.append(h1_seminorm_error(sol.y, st_.case.grad_y, st_.mesh))
    assert errs[1] < 0.5 * errs[0]
    faithful = compute_errors(cached_solution("square", 5)[1],
                              st_.case, st_.mesh).errors["y"]
    assert errs[1] < faithful
