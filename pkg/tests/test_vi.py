"""Obstacle constraint handling project onto an independent oracle.

The projected Gauss-Seidel path is checked against a primal-dual active-set
iteration written here from scratch (dense solves, explicit multiplier
sign conditions), so the two solvers share no code.
"""

import numpy as np
import pytest

import moscolab as ml
from moscolab.fem import CoefficientSet, SolverError, assemble_form, assemble_load, interpolate
from moscolab.parabolic import ParabolicProblem, TimeGrid, Trajectory, solve_parabolic
from moscolab.vi import (ConvexConstraint, VIProblem, feasibility_report,
                         project_H, solve_obstacle, solve_parabolic_vi,
                         weak_vi_residual)

from conftest import rng_for


@pytest.fixture(scope="module")
def space(rect_mesh):
    return ml.FunctionSpace(rect_mesh, "dirichlet")


def _active_set_solve(B, c, lower, max_iter=200):
    """Primal-dual active set oracle, dense linear algebra throughout."""
    B = np.asarray(B.todense() if hasattr(B, "todense") else B, dtype=float)
    c = np.asarray(c, dtype=float)
    n = len(c)
    finite = np.isfinite(lower)
    active = np.zeros(n, dtype=bool)
    for _ in range(max_iter):
        u = np.empty(n)
        free = ~active
        u[active] = lower[active]
        rhs = c[free] - B[np.ix_(free, active)] @ lower[active]
        u[free] = np.linalg.solve(B[np.ix_(free, free)], rhs)
        lam = B @ u - c
        grab = free & finite & (u < lower - 1e-12)
        drop = active & (lam < -1e-12)
        if not grab.any() and not drop.any():
            return u
        active = active | grab
        active[drop] = False
    raise RuntimeError("active set iteration did not settle")


# ---------------------------------------------------------------------------
# constraints
# ---------------------------------------------------------------------------

def test_constraint_accepted_forms(space):
    n = space.n_dofs
    assert np.all(ConvexConstraint(space, 0.5).lower == 0.5)
    fn = ConvexConstraint(space, lambda x: x[:, 0])
    assert np.array_equal(fn.lower, space.dof_coords[:, 0])
    arr = np.full(n, -np.inf)
    arr[0] = 1.0
    k = ConvexConstraint(space, arr)
    assert k.margin(np.full(n, 2.0)) == 1.0
    field = interpolate(space, lambda x: x[:, 1])
    assert np.array_equal(ConvexConstraint(space, field).lower, field.coeffs)


def test_constraint_validation(space, rect_mesh):
    other = ml.FunctionSpace(rect_mesh, "neumann")
    with pytest.raises(ValueError, match="different space"):
        ConvexConstraint(space, other.zero_field())
    with pytest.raises(ValueError, match="nodal values"):
        ConvexConstraint(space, np.zeros(3))
    bad = np.zeros(space.n_dofs)
    bad[0] = np.inf
    with pytest.raises(ValueError, match="finite or -inf"):
        ConvexConstraint(space, bad)
    bad[0] = np.nan
    with pytest.raises(ValueError, match="finite or -inf"):
        ConvexConstraint(space, bad)


def test_constraint_margin_and_shift(space):
    k = ConvexConstraint(space, 0.0)
    u = np.full(space.n_dofs, 0.25)
    assert k.margin(u) == 0.25
    assert k.shifted(0.5).margin(u) == pytest.approx(-0.25)
    free = ConvexConstraint(space, np.full(space.n_dofs, -np.inf))
    assert free.margin(u) == np.inf


def test_project_h(space):
    k = ConvexConstraint(space, 0.0)
    rng = rng_for("project")
    w = rng.standard_normal(space.n_dofs)
    p = project_H(w, k)
    assert np.all(p >= 0.0)
    assert np.array_equal(project_H(p, k), p)
    f = project_H(ml.fem.FEField(space, w), k)
    assert np.array_equal(f.coeffs, p)


# ---------------------------------------------------------------------------
# elliptic obstacle solves
# ---------------------------------------------------------------------------

def test_obstacle_matches_active_set_oracle(space):
    B = space.v_matrix
    c = assemble_load(space, lambda x: 10.0 * np.sin(2.0 * np.pi * x[:, 0]))
    k = ConvexConstraint(space, 0.0)
    u, info = solve_obstacle(B, c, k)
    want = _active_set_solve(B, c, k.lower)
    assert np.abs(u - want).max() < 1e-8
    assert k.margin(u) >= 0.0
    assert info.min_residual >= -1e-8 * (1.0 + np.linalg.norm(c))
    # the sign-changing load must produce genuine contact plus free nodes
    assert 0 < (u == 0.0).sum() < space.n_dofs


def test_obstacle_random_constraints_match_oracle(space):
    B = space.v_matrix
    for trial in range(5):
        rng = rng_for("obstacle-random", trial)
        c = rng.standard_normal(space.n_dofs)
        lower = rng.uniform(-0.5, 0.1, space.n_dofs)
        lower[rng.random(space.n_dofs) < 0.3] = -np.inf
        k = ConvexConstraint(space, lower)
        u, _ = solve_obstacle(B, c, k)
        want = _active_set_solve(B, c, lower)
        assert np.abs(u - want).max() < 1e-7, f"trial {trial}"


def test_obstacle_nonsymmetric_matches_oracle(space):
    adv = assemble_form(space, CoefficientSet(b=(0.4, -0.2), bound=1.0))
    B = (space.v_matrix + adv).tocsr()
    rng = rng_for("obstacle-nonsym")
    c = rng.standard_normal(space.n_dofs)
    k = ConvexConstraint(space, 0.0)
    u, info = solve_obstacle(B, c, k)
    want = _active_set_solve(B, c, k.lower)
    assert np.abs(u - want).max() < 1e-7
    assert info.outer_iterations >= 2       # the Richardson loop engaged


def test_obstacle_unconstrained_equals_linear_solve(space):
    B = space.v_matrix
    rng = rng_for("obstacle-free")
    c = rng.standard_normal(space.n_dofs)
    k = ConvexConstraint(space, np.full(space.n_dofs, -np.inf))
    u, _ = solve_obstacle(B, c, k)
    import scipy.sparse.linalg as spla
    want = spla.spsolve(B.tocsc(), c)
    assert np.abs(u - want).max() < 1e-7


def test_obstacle_inactive_when_psi_low(space):
    B = space.v_matrix
    c = assemble_load(space, lambda x: np.ones(len(x)))
    u_free, _ = solve_obstacle(B, c, ConvexConstraint(space, np.full(space.n_dofs, -np.inf)))
    u_low, _ = solve_obstacle(B, c, ConvexConstraint(space, -100.0))
    assert np.abs(u_free - u_low).max() < 1e-9


def test_obstacle_guards(space):
    with pytest.raises(SolverError, match="positive diagonal"):
        solve_obstacle(-np.eye(3), np.zeros(3), np.zeros(3))
    B = space.v_matrix
    c = assemble_load(space, lambda x: 10.0 * np.sin(2.0 * np.pi * x[:, 0]))
    with pytest.raises(SolverError, match="sweeps"):
        solve_obstacle(B, c, ConvexConstraint(space, 0.0), max_sweeps=1)


# ---------------------------------------------------------------------------
# parabolic VI
# ---------------------------------------------------------------------------

def _vi_problem(space, psi, steps=10, source=None, u0=None):
    grid = TimeGrid(0.5, steps)
    if source is None:
        source = lambda x, t: -np.ones(len(x))
    return VIProblem(space=space, coeffs=CoefficientSet.laplacian(),
                     source=source, u0=u0, grid=grid,
                     constraint=ConvexConstraint(space, psi))


def test_parabolic_vi_feasible_with_contact(space):
    p = _vi_problem(space, -0.02)
    traj = solve_parabolic_vi(p)
    rep = feasibility_report(traj, p.constraint)
    assert rep.ok
    assert rep.min_margin >= -1e-12
    # the negative source drives the center onto the obstacle
    assert p.constraint.margin(traj.values[-1]) == pytest.approx(0.0, abs=1e-12)


def test_parabolic_vi_no_contact_equals_equation(space):
    psi = np.full(space.n_dofs, -1e3)
    p = _vi_problem(space, psi)
    traj_vi = solve_parabolic_vi(p, tol_change=1e-12)
    q = ParabolicProblem(space=space, coeffs=p.coeffs, source=p.source,
                         u0=None, grid=p.grid, theta=1.0)
    traj_eq = solve_parabolic(q, tol=1e-12)
    diff = np.abs(traj_vi.values - traj_eq.values).max()
    assert diff < 1e-8


def test_parabolic_vi_respects_initial_datum_check(space):
    with pytest.raises(ValueError, match="violates the obstacle"):
        _vi_problem(space, 0.5, u0=None).initial_field()


def test_vi_problem_space_mismatch(rect_mesh, space):
    other = ml.FunctionSpace(rect_mesh, "neumann")
    with pytest.raises(ValueError, match="different space"):
        VIProblem(space=space, coeffs=CoefficientSet.laplacian(),
                  source=None, u0=None, grid=TimeGrid(1.0, 2),
                  constraint=ConvexConstraint(other, 0.0))


def test_parabolic_vi_failure_names_step(space):
    p = _vi_problem(space, -0.02, steps=2)
    with pytest.raises(SolverError, match="time step 1:"):
        solve_parabolic_vi(p, max_sweeps=1)


# ---------------------------------------------------------------------------
# weak residual and feasibility reporting
# ---------------------------------------------------------------------------

def test_weak_vi_residual_self_is_zero(space):
    p = _vi_problem(space, -0.02)
    u = solve_parabolic_vi(p)
    assert weak_vi_residual(u, u, p) == pytest.approx(0.0, abs=1e-14)


def test_weak_vi_residual_nonnegative_for_comparisons(space):
    p = _vi_problem(space, -0.02)
    u = solve_parabolic_vi(p)
    scale = 1.0 + u.norm_l2V() ** 2
    # constant-in-time feasible comparison trajectories
    for shift in (0.05, 0.2):
        v_vals = np.tile(p.constraint.project(u.values[0] + shift), (p.grid.steps + 1, 1))
        v = Trajectory(space, p.grid, v_vals)
        r = weak_vi_residual(u, v, p)
        assert r >= -1e-6 * scale, f"shift {shift}: residual {r}"


def test_weak_vi_residual_rejects_infeasible_comparison(space):
    p = _vi_problem(space, -0.02)
    u = solve_parabolic_vi(p)
    v = Trajectory(space, p.grid, np.full_like(u.values, -1.0))
    with pytest.raises(ValueError, match="infeasible"):
        weak_vi_residual(u, v, p)


def test_weak_vi_residual_grid_guard(space):
    p = _vi_problem(space, -0.02, steps=4)
    u = solve_parabolic_vi(p)
    other = Trajectory(space, TimeGrid(0.5, 5), np.zeros((6, space.n_dofs)))
    with pytest.raises(ValueError, match="grid"):
        weak_vi_residual(u, other, p)


def test_feasibility_report_locates_violations(space):
    k = ConvexConstraint(space, 0.0)
    g = TimeGrid(1.0, 2)
    vals = np.full((3, space.n_dofs), 0.5)
    vals[1, 7] = -0.25
    rep = feasibility_report(Trajectory(space, g, vals), k)
    assert not rep.ok
    assert rep.min_margin == pytest.approx(-0.25)
    assert rep.violations == [(1, 7, -0.25)]
    vals[1, 7] = 0.0
    assert feasibility_report(Trajectory(space, g, vals), k).ok
