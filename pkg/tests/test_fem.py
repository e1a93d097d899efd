"""Assembly oracles, coefficient guards, the linear solver, form constants.

The quadrature is exact for quadratics, which gives machine-precision
oracles: mass row sums against the area, linear-field Dirichlet energy, and
loads of affine sources against ``M @ f_nodes``.
"""

import numpy as np
import pytest
import scipy.linalg
import scipy.sparse.linalg as spla

import moscolab as ml
from moscolab.fem import (AssemblyError, Coefficient, CoefficientSet, FEField,
                          SolverError, assemble_form, assemble_load,
                          assemble_mass, estimate_form_constants, interpolate,
                          solve_linear)

from conftest import rng_for


@pytest.fixture(scope="module")
def neu(rect_mesh):
    return ml.FunctionSpace(rect_mesh, "neumann")


@pytest.fixture(scope="module")
def dir_(rect_mesh):
    return ml.FunctionSpace(rect_mesh, "dirichlet")


# ---------------------------------------------------------------------------
# spaces
# ---------------------------------------------------------------------------

def test_space_bc_validation(rect_mesh):
    with pytest.raises(ValueError, match="bc"):
        ml.FunctionSpace(rect_mesh, "robin")
    with pytest.raises(TypeError):
        ml.FunctionSpace("not a mesh", "dirichlet")


def test_dof_counts(rect_mesh, neu, dir_):
    nv = len(rect_mesh.vertices)
    assert neu.n_dofs == nv
    assert dir_.n_dofs == nv - len(rect_mesh.boundary_vertices)


def test_dirichlet_vertex_values_vanish_on_boundary(dir_):
    u = FEField(dir_, np.ones(dir_.n_dofs))
    vv = u.vertex_values
    assert np.all(vv[dir_.mesh.boundary_vertices] == 0.0)
    assert np.all(vv[dir_.dof_vertices] == 1.0)


# ---------------------------------------------------------------------------
# assembly oracles
# ---------------------------------------------------------------------------

def test_mass_total_equals_area(neu):
    M = neu.mass_matrix
    ones = np.ones(neu.n_dofs)
    assert ones @ (M @ ones) == pytest.approx(neu.mesh.area, abs=1e-14)


def test_mass_is_spd(neu):
    evals = scipy.linalg.eigvalsh(neu.mass_matrix.toarray())
    assert evals[0] > 0.0


def test_stiffness_annihilates_constants(neu):
    S = neu.stiffness_matrix
    ones = np.ones(neu.n_dofs)
    assert np.abs(S @ ones).max() < 1e-13


def test_linear_field_energy(neu):
    # u = x + 2y has constant gradient (1, 2): energy integral is 5 |Omega|
    u = interpolate(neu, lambda x: x[:, 0] + 2.0 * x[:, 1])
    e = u.coeffs @ (neu.stiffness_matrix @ u.coeffs)
    assert e == pytest.approx(5.0 * neu.mesh.area, rel=1e-13)


def test_load_of_affine_source_is_mass_action(neu):
    # both sides integrate a quadratic exactly
    f = lambda x: 0.3 - 1.2 * x[:, 0] + 0.7 * x[:, 1]
    load = assemble_load(neu, f)
    fn = interpolate(neu, f)
    oracle = neu.mass_matrix @ fn.coeffs
    assert np.abs(load - oracle).max() < 1e-14


def test_load_rejects_bad_source_shape(neu):
    with pytest.raises(AssemblyError, match="one value per"):
        assemble_load(neu, lambda x: np.zeros((len(x), 2)))


def test_dirichlet_form_is_principal_submatrix(rect_mesh, neu, dir_):
    coeffs = CoefficientSet.laplacian(diffusion=2.0, c0=0.5, bound=2.0)
    A_n = assemble_form(neu, coeffs).toarray()
    A_d = assemble_form(dir_, coeffs).toarray()
    keep = neu.dof_map[dir_.dof_vertices]
    assert np.abs(A_n[np.ix_(keep, keep)] - A_d).max() < 1e-14


def test_form_with_advection_is_nonsymmetric(neu):
    coeffs = CoefficientSet(b=(1.0, 0.0), bound=1.0)
    A = assemble_form(neu, coeffs)
    asym = A - A.T
    assert np.abs(asym.toarray()).max() > 1e-3
    # transposing the roles: b-term a(u,v) = integral d1(u) ... pairs with a_lower
    coeffs2 = CoefficientSet(a_lower=(1.0, 0.0), bound=1.0)
    B = assemble_form(neu, coeffs2)
    assert np.abs((A.T - B).toarray()).max() < 1e-14


def test_time_dependent_form_changes_with_t(neu):
    c = Coefficient("harmonic_t", (2.0, 1.0, 0.0, np.pi))
    coeffs = CoefficientSet(c0=c, bound=3.0)
    A0 = assemble_form(neu, coeffs, t=0.0)  # c0 = 3
    A1 = assemble_form(neu, coeffs, t=1.0)  # c0 = 1
    diff = (A0 - A1) - 2.0 * neu.mass_matrix
    assert np.abs(diff.toarray()).max() < 1e-13


# ---------------------------------------------------------------------------
# coefficients
# ---------------------------------------------------------------------------

def test_coefficient_presets_evaluate():
    x = np.array([[0.5, 0.25], [1.0, -1.0]])
    assert np.allclose(Coefficient.constant(3.0)(x, 0.7), [3.0, 3.0])
    aff = Coefficient.affine(1.0, 2.0, 4.0)
    assert np.allclose(aff(x, 0.0), [1 + 1.0 + 1.0, 1 + 2.0 - 4.0])
    har = Coefficient("harmonic_t", (1.0, 2.0, 3.0, 0.5))
    t = 0.9
    want = 1.0 + 2.0 * np.cos(0.5 * t) + 3.0 * np.sin(0.5 * t)
    assert np.allclose(har(x, t), want)
    pr = Coefficient("product", (1.0, 1.0, 0.0, 2.0, 0.0, 1.0, 1.0))
    want = (1.0 + x[:, 0]) * (2.0 + np.sin(t))
    assert np.allclose(pr(x, t), want)


def test_coefficient_rejects_unknown_and_arity():
    with pytest.raises(AssemblyError, match="preset"):
        Coefficient("cubic", (1.0,))
    with pytest.raises(AssemblyError, match="parameters"):
        Coefficient("affine_x", (1.0,))


def test_coefficient_set_validation():
    with pytest.raises(AssemblyError, match="2 x 2"):
        CoefficientSet(a=((1.0,),))
    with pytest.raises(AssemblyError, match="alpha"):
        CoefficientSet(alpha=0.0)
    with pytest.raises(AssemblyError, match="two entries"):
        CoefficientSet(b=(1.0, 2.0, 3.0))


def test_check_at_flags_magnitude_violation(neu):
    c = CoefficientSet.laplacian(diffusion=4.0, bound=2.0)
    with pytest.raises(AssemblyError, match="magnitude"):
        assemble_form(neu, c)


def test_check_at_flags_lost_ellipticity(neu):
    # identity principal part declared with alpha = 2 has min eigenvalue 1
    c = CoefficientSet(alpha=2.0, bound=1.0)
    with pytest.raises(AssemblyError, match="alpha"):
        assemble_form(neu, c)


def test_check_at_spatially_varying_ellipticity(neu):
    # a11 = 2 - x1 dips to 1 on the right edge; declaring alpha = 1 is tight
    a11 = Coefficient.affine(2.0, -1.0, 0.0)
    ok = CoefficientSet(a=((a11, 0.0), (0.0, 2.0)), alpha=1.0, bound=2.0)
    assemble_form(neu, ok)
    bad = CoefficientSet(a=((a11, 0.0), (0.0, 2.0)), alpha=1.5, bound=2.0)
    with pytest.raises(AssemblyError):
        assemble_form(neu, bad)


# ---------------------------------------------------------------------------
# interpolation
# ---------------------------------------------------------------------------

def test_interpolate_reproduces_affine(dir_):
    u = interpolate(dir_, lambda x: 2.0 * x[:, 0] - x[:, 1])
    want = 2.0 * dir_.dof_coords[:, 0] - dir_.dof_coords[:, 1]
    assert np.array_equal(u.coeffs, want)


def test_interpolate_passes_time(neu):
    u = interpolate(neu, lambda x, t: t * np.ones(len(x)), t=2.5)
    assert np.all(u.coeffs == 2.5)


def test_interpolate_shape_guard(neu):
    with pytest.raises(ValueError, match="one value per point"):
        interpolate(neu, lambda x: np.array([1.0]))


def test_field_validation(neu):
    with pytest.raises(ValueError, match="coefficients"):
        FEField(neu, np.zeros(3))
    bad = np.zeros(neu.n_dofs)
    bad[0] = np.nan
    with pytest.raises(ValueError, match="finite"):
        FEField(neu, bad)


# ---------------------------------------------------------------------------
# linear solver
# ---------------------------------------------------------------------------

def test_solve_linear_against_direct(neu):
    rng = rng_for("solve-linear")
    A = neu.v_matrix
    b = rng.standard_normal(neu.n_dofs)
    x = solve_linear(A, b, tol=1e-12)
    want = spla.spsolve(A.tocsc(), b)
    rel = np.linalg.norm(x - want) / np.linalg.norm(want)
    assert rel < 1e-8


def test_solve_linear_nonsymmetric(neu):
    coeffs = CoefficientSet(b=(1.0, -0.5), c0=1.0, bound=1.0)
    A = neu.mass_matrix + 0.01 * assemble_form(neu, coeffs)
    rng = rng_for("solve-nonsym")
    b = rng.standard_normal(neu.n_dofs)
    x = solve_linear(A, b, tol=1e-12)
    assert np.linalg.norm(A @ x - b) <= 1e-12 * np.linalg.norm(b) * 1.01


def test_solve_linear_zero_rhs(neu):
    x = solve_linear(neu.v_matrix, np.zeros(neu.n_dofs))
    assert np.array_equal(x, np.zeros(neu.n_dofs))


def test_solve_linear_reports_failure():
    A = np.array([[1.0, 0.0], [0.0, 0.0]])     # singular, rhs inconsistent
    with pytest.raises(SolverError) as exc:
        solve_linear(A, np.array([1.0, 1.0]), maxiter=8)
    assert exc.value.residual is not None
    assert exc.value.residual > 0.0


def test_solve_linear_deterministic(neu):
    rng = rng_for("solve-det")
    b = rng.standard_normal(neu.n_dofs)
    x1 = solve_linear(neu.v_matrix, b)
    x2 = solve_linear(neu.v_matrix, b)
    assert np.array_equal(x1, x2)


def test_dual_norm_is_riesz_norm(neu):
    rng = rng_for("dual-norm")
    u = rng.standard_normal(neu.n_dofs)
    load = neu.v_matrix @ u
    assert neu.dual_norm(load) == pytest.approx(neu.norm_V(u), rel=1e-10)


# ---------------------------------------------------------------------------
# form constants
# ---------------------------------------------------------------------------

def test_constants_pure_laplacian(neu):
    # a(u,u) = |u|_1^2 misses the mass part of the V norm by exactly one
    rep = estimate_form_constants(neu, CoefficientSet.laplacian(), seed=7)
    assert rep.lam_est == pytest.approx(1.0, abs=1e-6)
    assert rep.alpha_est == 1.0
    assert 0.1 < rep.M_est <= 1.0 + 1e-9


def test_constants_reaction_restores_coercivity(neu):
    rep = estimate_form_constants(
        neu, CoefficientSet.laplacian(c0=1.0), seed=7)
    assert rep.lam_est <= 1e-8


def test_constants_negative_reaction(dir_):
    rep = estimate_form_constants(
        dir_, CoefficientSet.laplacian(c0=-5.0, bound=5.0), seed=7)
    assert rep.lam_est == pytest.approx(6.0, abs=1e-6)


def test_constants_time_sampling(neu):
    # reaction collapses to zero at t = 1/2: the estimate must see it
    c = Coefficient("harmonic_t", (0.5, 0.0, -0.5, np.pi))
    rep = estimate_form_constants(
        neu, CoefficientSet(c0=c, bound=1.0), times=[0.0, 0.5], seed=7)
    assert rep.lam_est == pytest.approx(1.0, abs=1e-6)
