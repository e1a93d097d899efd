"""Study drivers: rate fits, verdicts, report plumbing, trivial limits.

The expensive full-scale runs live in the acceptance suite; here every
study is shrunk until its outcome is forced (zero perturbation, constant
shift), which pins the verdict logic without numerical slack.
"""

import math

import numpy as np
import pytest

import moscolab as ml
from moscolab.fem import CoefficientSet
from moscolab.parabolic import TimeGrid, Trajectory, solve_parabolic, ParabolicProblem
from moscolab.study import (NORM_KEYS, VERDICT_DECREASING, VERDICT_STAGNANT,
                            ConvergenceReport, RateFit, StudyConfig,
                            _verdict, fit_rate, manufactured_error,
                            run_dirichlet_study, run_neumann_study,
                            run_vi_study, write_report)

from conftest import rng_for


# ---------------------------------------------------------------------------
# rate fitting
# ---------------------------------------------------------------------------

def test_fit_rate_exact_powers():
    p = [0.5, 0.25, 0.125, 0.0625]
    fit1 = fit_rate(p, [3.0 * x for x in p])
    assert fit1.rate == pytest.approx(1.0, abs=1e-12)
    assert fit1.r2 == pytest.approx(1.0, abs=1e-12)
    assert fit1.n_used == 4
    fit2 = fit_rate(p, [2.0 * x ** 2 for x in p])
    assert fit2.rate == pytest.approx(2.0, abs=1e-12)


def test_fit_rate_tolerates_jitter():
    rng = rng_for("rate-jitter")
    p = [2.0 ** -n for n in range(1, 7)]
    e = [x * float(1.0 + 0.05 * rng.uniform(-1, 1)) for x in p]
    fit = fit_rate(p, e)
    assert abs(fit.rate - 1.0) < 0.15
    assert fit.r2 > 0.99


def test_fit_rate_needs_three_points_above_floor():
    p = [0.5, 0.25, 0.125, 0.0625]
    e = [1.0, 0.9, 0.01, 0.01]
    fit = fit_rate(p, e, floor=0.1)      # only two entries above 3*floor
    assert math.isnan(fit.rate) and math.isnan(fit.r2)
    assert fit.n_used == 2


def test_fit_rate_constant_params():
    fit = fit_rate([0.25, 0.25, 0.25, 0.25], [1.0, 0.9, 0.8, 0.7])
    assert math.isnan(fit.rate)


# ---------------------------------------------------------------------------
# verdict rule
# ---------------------------------------------------------------------------

def test_verdict_strict_decrease_to_floor():
    assert _verdict([8.0, 4.0, 2.0, 1.0], 0.5) == VERDICT_DECREASING


def test_verdict_flat_series():
    assert _verdict([8.0, 8.0, 8.0], 0.001) == VERDICT_STAGNANT


def test_verdict_decrease_that_stalls_high():
    assert _verdict([8.0, 4.0, 3.9, 3.8], 0.001) == VERDICT_STAGNANT


def test_verdict_ignores_noise_below_band():
    # non-monotone wiggle inside three floors is acceptable
    assert _verdict([8.0, 4.0, 0.1, 0.12], 0.05) == VERDICT_DECREASING


def test_verdict_final_within_fifth_of_first():
    assert _verdict([10.0, 5.0, 1.9], 0.01) == VERDICT_DECREASING
    assert _verdict([10.0, 5.0, 2.1], 0.01) == VERDICT_STAGNANT


# ---------------------------------------------------------------------------
# report plumbing
# ---------------------------------------------------------------------------

def _toy_report():
    # dyadic values stay short under the writer's %.17g format
    return ConvergenceReport(
        kind="cracked_disk", bc="dirichlet", indices=[1, 2],
        params=[0.5, 0.25],
        errors={"err_L2H1": [0.5, 0.25], "err_CL2": [0.375, 0.1875],
                "err_grad": [0.25, 0.125], "err_L2L2": [0.125, 0.0625]},
        floors={k: 0.015625 for k in NORM_KEYS},
        verdicts={k: VERDICT_DECREASING for k in NORM_KEYS},
        rates={k: RateFit(1.0, 1.0, 2) for k in NORM_KEYS})


def test_write_report_golden(tmp_path):
    path = tmp_path / "report.csv"
    write_report(path, _toy_report())
    assert path.read_text() == (
        "n,param,err_L2H1,err_CL2,err_grad,floor,verdict\n"
        "1,0.5,0.5,0.375,0.25,0.015625,decreasing_to_floor\n"
        "2,0.25,0.25,0.1875,0.125,0.015625,decreasing_to_floor\n")


def test_report_to_dict_deterministic():
    rep = _toy_report()
    d = rep.to_dict()
    assert list(d["errors"]) == sorted(NORM_KEYS)
    assert d["rates"]["err_L2H1"] == {"rate": 1.0, "r2": 1.0, "n_used": 2}
    assert rep.verdict == VERDICT_DECREASING
    assert rep.floor == 0.015625
    assert rep.series("err_CL2") == [0.375, 0.1875]


def test_config_index_rules():
    cfg = StudyConfig(grid=TimeGrid(0.1, 2), indices=[2, 4])
    assert cfg.index_list() == [2, 4]
    with pytest.raises(ValueError, match="indices"):
        StudyConfig(grid=TimeGrid(0.1, 2)).index_list()
    fam = ml.DomainFamily("cracked_disk", 0.1, n_max=3)
    assert StudyConfig(grid=TimeGrid(0.1, 2), family=fam).index_list() == [1, 2, 3]


def test_run_vi_study_requires_mesh_and_obstacle():
    with pytest.raises(ValueError, match="obstacle studies"):
        run_vi_study(StudyConfig(grid=TimeGrid(0.1, 2)))


# ---------------------------------------------------------------------------
# forced-outcome studies
# ---------------------------------------------------------------------------

def _null_family():
    # every member IS the limit domain: errors can only sit at the floor
    return ml.DomainFamily("cracked_disk", 0.1, n_max=2, params=(0.0, 0.0))


def test_dirichlet_study_zero_perturbation():
    cfg = StudyConfig(grid=TimeGrid(0.1, 4), family=_null_family(),
                      source=1.0, u0=0.0)
    rep = run_dirichlet_study(cfg)
    assert rep.kind == "cracked_disk" and rep.bc == "dirichlet"
    for col in NORM_KEYS:
        assert max(rep.errors[col]) <= 3.0 * rep.floors[col] + 1e-12
        assert rep.verdicts[col] == VERDICT_DECREASING
        assert math.isnan(rep.rates[col].rate)   # params are zero


def test_dirichlet_study_jobs_deterministic():
    fam = ml.DomainFamily("cracked_disk", 0.1, n_max=2)
    mk = lambda jobs: StudyConfig(grid=TimeGrid(0.1, 3), family=fam,
                                  source=1.0, u0=0.0, jobs=jobs)
    r1 = run_dirichlet_study(mk(1))
    r2 = run_dirichlet_study(mk(2))
    assert r1.errors == r2.errors
    assert r1.floors == r2.floors


def test_perturb_overrides_per_index_data():
    cfg = StudyConfig(grid=TimeGrid(0.1, 3), family=_null_family(),
                      source=1.0, u0=0.0,
                      perturb=lambda n: {"source": 0.0} if n == 1 else {})
    rep = run_dirichlet_study(cfg)
    # the zeroed source at n=1 leaves that solve far from the limit
    assert rep.errors["err_L2H1"][0] > 10.0 * rep.errors["err_L2H1"][1]


def test_neumann_dumbbell_reports_handle_flux():
    fam = ml.DomainFamily("dumbbell", 0.05, n_max=2)
    cfg = StudyConfig(grid=TimeGrid(0.1, 2), family=fam, source=1.0,
                      u0=0.0, n_cells=64)
    rep = run_neumann_study(cfg)
    flux = rep.extras["handle_flux"]
    assert len(flux) == 2
    assert all(np.isfinite(f) and f >= 0.0 for f in flux)
    assert rep.bc == "neumann"


def test_vi_study_zero_shift_sits_at_floor(rect_mesh):
    cfg = StudyConfig(grid=TimeGrid(0.1, 4), mesh=rect_mesh, source=-1.0,
                      u0=0.0, obstacle=-0.1, obstacle_shifts=[0.0, 0.0],
                      indices=[1, 2])
    rep = run_vi_study(cfg)
    assert rep.kind == "obstacle_shift"
    for col in NORM_KEYS:
        assert max(rep.errors[col]) <= rep.floors[col]
        assert rep.verdicts[col] == VERDICT_DECREASING
    ex = rep.extras
    assert all(m >= -1e-12 for m in ex["feasibility_margin"])
    assert all(abs(r) <= 1e-12 for r in ex["weak_residual_self"])
    assert ex["bound_l2V"] == pytest.approx([ex["bound_l2V_limit"]] * 2, rel=1e-9)


def test_vi_study_constant_shift_is_stagnant(rect_mesh):
    cfg = StudyConfig(grid=TimeGrid(0.1, 4), mesh=rect_mesh, source=-1.0,
                      u0=1.0, obstacle=-0.1, obstacle_shifts=[1.0, 1.0, 1.0],
                      indices=[1, 2, 3])
    rep = run_vi_study(cfg)
    e = rep.errors["err_L2H1"]
    assert min(e) > 100.0 * rep.floor
    assert max(e) - min(e) < 1e-9 * max(e)
    assert rep.verdict == VERDICT_STAGNANT


def test_vi_study_shift_count_guard(rect_mesh):
    cfg = StudyConfig(grid=TimeGrid(0.1, 2), mesh=rect_mesh, source=-1.0,
                      u0=0.0, obstacle=-0.1, obstacle_shifts=[0.5],
                      indices=[1, 2])
    with pytest.raises(ValueError, match="one obstacle shift per index"):
        run_vi_study(cfg)


# ---------------------------------------------------------------------------
# manufactured-solution metric
# ---------------------------------------------------------------------------

def test_manufactured_error_exact_for_affine():
    space = ml.FunctionSpace(ml.generate_rectangle(0.25), "neumann")
    g = TimeGrid(0.5, 2)
    nodal = 1.0 + 2.0 * space.dof_coords[:, 0] + 3.0 * space.dof_coords[:, 1]
    traj = Trajectory(space, g, np.tile(nodal, (3, 1)))
    err_h1, err_cl2 = manufactured_error(
        traj,
        lambda x, t: 1.0 + 2.0 * x[:, 0] + 3.0 * x[:, 1],
        lambda x, t: np.tile([2.0, 3.0], (len(x), 1)))
    assert err_h1 < 1e-13
    assert err_cl2 < 1e-13


def test_manufactured_error_detects_wrong_solution():
    space = ml.FunctionSpace(ml.generate_rectangle(0.25), "neumann")
    g = TimeGrid(0.5, 2)
    traj = Trajectory(space, g, np.zeros((3, space.n_dofs)))
    err_h1, err_cl2 = manufactured_error(
        traj,
        lambda x, t: np.ones(len(x)),
        lambda x, t: np.zeros((len(x), 2)))
    # |1|_{L2(0,T;H1)} = sqrt(T), sup |1|_{L2} = 1 on the unit square
    assert err_h1 == pytest.approx(np.sqrt(0.5), rel=1e-12)
    assert err_cl2 == pytest.approx(1.0, rel=1e-12)
