"""End-to-end domain-perturbation convergence studies.

A study solves the same parabolic problem on every member of a domain
family and on the declared limit domain, embeds all trajectories over the
shared hold-all ball, and reports error series in the norms that the
convergence statements use: l2-in-time of the combined value/gradient
norm, sup-in-time of the value norm, and the gradient part alone.

Verdicts are mechanical.  The floor is calibrated by re-solving the limit
problem on an independent triangulation of the limit domain and measuring
the distance of the two limit solutions through the same embedding
pipeline; a series is ``decreasing_to_floor`` when it decreases strictly
wherever it sits above three floors and its final value is small (below
three floors or below 20% of the first entry), otherwise ``stagnant``.

Obstacle-family studies keep the domain fixed, so their errors are native
mesh norms and the floor reduces to solver-tolerance scale.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .fem import CoefficientSet, FEField, FunctionSpace, interpolate
from .mesh import DomainFamily
from .mosco import EMBED_DIRICHLET, EMBED_NEUMANN, HoldallGrid, embed_trajectory
from .parabolic import ParabolicProblem, TimeGrid, Trajectory, solve_parabolic
from .vi import (ConvexConstraint, VIProblem, feasibility_report,
                 solve_parabolic_vi, weak_vi_residual)

__all__ = [
    "VERDICT_DECREASING", "VERDICT_STAGNANT", "NORM_KEYS", "StudyConfig",
    "ConvergenceReport", "RateFit", "run_dirichlet_study",
    "run_neumann_study", "run_vi_study", "fit_rate", "manufactured_error",
    "write_report",
]

VERDICT_DECREASING = "decreasing_to_floor"
VERDICT_STAGNANT = "stagnant"

#: report column -> embedded-trajectory norm
NORM_KEYS = {
    "err_L2H1": "l2_h1",
    "err_CL2": "sup_l2",
    "err_grad": "l2_grad",
    "err_L2L2": "l2_l2",
}


@dataclass
class StudyConfig:
    """Declarative description of one convergence study.

    Domain studies need ``family``; obstacle studies need ``mesh`` and
    ``obstacle`` instead (the domain is fixed and the constraint moves).
    ``source`` and ``u0`` accept scalars or callables; ``perturb`` may map
    an index n to per-index overrides ``{"source": ..., "u0": ...}`` for
    convergent-data variants.  ``sup_from`` restricts the sup-in-time
    norm to later times (the weak-data variant).
    """
    grid: TimeGrid
    family: DomainFamily = None
    mesh: object = None
    coeffs: CoefficientSet = None
    source: object = None
    u0: object = None
    obstacle: object = None
    obstacle_shifts: object = None
    indices: object = None
    perturb: object = None
    theta: float = 1.0
    n_cells: int = 128
    sup_from: float = None
    solver_tol: float = 1e-10
    jobs: int = 1

    def __post_init__(self):
        if self.coeffs is None:
            self.coeffs = CoefficientSet.laplacian(1.0)

    def index_list(self):
        if self.indices is not None:
            return [int(n) for n in self.indices]
        if self.family is None:
            raise ValueError("config needs indices when no family is given")
        return list(range(1, self.family.n_max + 1))

    def data_for(self, n):
        over = self.perturb(n) if self.perturb is not None else {}
        return over.get("source", self.source), over.get("u0", self.u0)


class RateFit(NamedTuple):
    """Least-squares log-log fit of error against family parameter."""
    rate: float
    r2: float
    n_used: int


def fit_rate(params, errors, floor=0.0):
    """Fit error ~ C * param**rate over the points above three floors.

    Fewer than three usable points yield NaN rate and r2 (reported, never
    fatal): a series already at the floor has no meaningful rate.
    """
    p = np.asarray(params, dtype=float)
    e = np.asarray(errors, dtype=float)
    keep = (e > 3.0 * floor) & (e > 0) & (p > 0)
    n = int(keep.sum())
    if n < 3:
        return RateFit(math.nan, math.nan, n)
    lp, le = np.log(p[keep]), np.log(e[keep])
    if np.ptp(lp) < 1e-12:
        return RateFit(math.nan, math.nan, n)
    slope, intercept = np.polyfit(lp, le, 1)
    fitted = slope * lp + intercept
    ss_res = float(((le - fitted) ** 2).sum())
    ss_tot = float(((le - le.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return RateFit(float(slope), r2, n)


def _verdict(errors, floor):
    e = np.asarray(errors, dtype=float)
    band = 3.0 * floor
    for k in range(len(e) - 1):
        if e[k] > band and not e[k + 1] < e[k]:
            return VERDICT_STAGNANT
    if e[-1] <= max(band, 0.2 * e[0]):
        return VERDICT_DECREASING
    return VERDICT_STAGNANT


@dataclass
class ConvergenceReport:
    """Error series, floors, verdicts, and fitted rates of one study."""
    kind: str
    bc: str
    indices: list
    params: list
    errors: dict
    floors: dict
    verdicts: dict
    rates: dict
    extras: dict = field(default_factory=dict)

    @property
    def verdict(self):
        """Verdict of the primary (combined-norm) series."""
        return self.verdicts["err_L2H1"]

    @property
    def floor(self):
        return self.floors["err_L2H1"]

    def series(self, column):
        return self.errors[column]

    def to_dict(self):
        """Plain JSON-ready representation (deterministic ordering)."""
        rates = {k: {"rate": v.rate, "r2": v.r2, "n_used": v.n_used}
                 for k, v in sorted(self.rates.items())}
        return {
            "kind": self.kind,
            "bc": self.bc,
            "indices": list(self.indices),
            "params": [float(p) for p in self.params],
            "errors": {k: [float(x) for x in v] for k, v in sorted(self.errors.items())},
            "floors": {k: float(v) for k, v in sorted(self.floors.items())},
            "verdicts": dict(sorted(self.verdicts.items())),
            "rates": rates,
            "extras": self.extras,
        }


def write_report(path, report):
    """CSV export: ``n,param,err_L2H1,err_CL2,err_grad,floor,verdict``."""
    lines = ["n,param,err_L2H1,err_CL2,err_grad,floor,verdict"]
    floor = report.floors["err_L2H1"]
    verdict = report.verdicts["err_L2H1"]
    for i, n in enumerate(report.indices):
        cols = [str(n), f"{report.params[i]:.17g}"]
        for key in ("err_L2H1", "err_CL2", "err_grad"):
            cols.append(f"{report.errors[key][i]:.17g}")
        cols.append(f"{floor:.17g}")
        cols.append(verdict)
        lines.append(",".join(cols))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# problem plumbing
# ---------------------------------------------------------------------------

def _as_source(spec):
    if spec is None or callable(spec):
        return spec
    value = float(spec)
    return lambda x, t: np.full(len(x), value)

def _as_initial(spec):
    if spec is None or callable(spec) or isinstance(spec, FEField):
        return spec
    value = float(spec)
    return lambda x: np.full(len(x), value)


def _solve_equation(space, cfg, n=None):
    source, u0 = cfg.data_for(n) if n is not None else (cfg.source, cfg.u0)
    problem = ParabolicProblem(space, cfg.coeffs, _as_source(source),
                               _as_initial(u0), cfg.grid, theta=cfg.theta)
    return solve_parabolic(problem, tol=cfg.solver_tol)


def _map_indices(cfg, fn):
    indices = cfg.index_list()
    if cfg.jobs and cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            return indices, list(pool.map(fn, indices))
    return indices, [fn(n) for n in indices]


def _run_domain_study(cfg, bc, kind):
    if cfg.family is None:
        raise ValueError("domain studies need a family")
    family = cfg.family
    limit_mesh = family.limit_mesh()
    grid_D = HoldallGrid(limit_mesh.holdall_radius, cfg.n_cells)
    limit_space = FunctionSpace(limit_mesh, bc)
    alt_space = FunctionSpace(family.alt_limit_mesh(), bc)
    u_limit = _solve_equation(limit_space, cfg)
    u_alt = _solve_equation(alt_space, cfg)
    e_limit = embed_trajectory(u_limit, kind, grid_D)
    e_alt = embed_trajectory(u_alt, kind, grid_D)
    floors = {col: e_limit.distance(e_alt, nk, sup_from=cfg.sup_from)
              for col, nk in NORM_KEYS.items()}

    handle_strip = None
    if family.kind == "dumbbell":
        handle_strip = np.abs(grid_D.points[:, 0]) <= 0.5

    def one(n):
        space = FunctionSpace(family.mesh(n), bc)
        traj = _solve_equation(space, cfg, n=n)
        e_n = embed_trajectory(traj, kind, grid_D)
        errs = {col: e_limit.distance(e_n, nk, sup_from=cfg.sup_from)
                for col, nk in NORM_KEYS.items()}
        flux = None
        if handle_strip is not None:
            gsq = np.einsum("ksd,s->k", e_n.grads[:, handle_strip] ** 2,
                            grid_D.weights[handle_strip])
            flux = float(np.sqrt(cfg.grid.trapezoid_weights() @ gsq))
        return errs, flux

    indices, results = _map_indices(cfg, one)
    errors = {col: [r[0][col] for r in results] for col in NORM_KEYS}
    params = [family.param(n) for n in indices]
    verdicts = {col: _verdict(errors[col], floors[col]) for col in NORM_KEYS}
    rates = {col: fit_rate(params, errors[col], floors[col]) for col in NORM_KEYS}
    extras = {}
    if handle_strip is not None:
        extras["handle_flux"] = [r[1] for r in results]
    return ConvergenceReport(family.kind, bc, indices, params, errors,
                             floors, verdicts, rates, extras)


def run_dirichlet_study(cfg):
    """Domain-family study under homogeneous Dirichlet conditions.

    Solutions embed by zero extension; the primary series is the
    l2-in-time H1(D) error against the embedded limit solution.
    """
    return _run_domain_study(cfg, "dirichlet", EMBED_DIRICHLET)


def run_neumann_study(cfg):
    """Domain-family study under natural boundary conditions.

    Solutions embed as raw value/gradient pairs; the gradient column is
    the honest statement here since the pair samples are not gradients of
    an H1(D) function.
    """
    return _run_domain_study(cfg, "neumann", EMBED_NEUMANN)


def run_vi_study(cfg):
    """Obstacle-family study on a fixed domain.

    The constraint sequence is the base obstacle shifted by
    ``obstacle_shifts[i]`` (default ``2**-n``); the limit problem uses the
    unshifted obstacle.  Errors are native mesh norms of the difference to
    the limit solution; extras carry the boundedness diagnostics, the
    feasibility margins of every solver output, and weak-form residuals
    tested against the solution itself and against the constant initial
    trajectory.
    """
    if cfg.mesh is None or cfg.obstacle is None:
        raise ValueError("obstacle studies need a fixed mesh and a base obstacle")
    space = FunctionSpace(cfg.mesh, "dirichlet")
    base = ConvexConstraint(space, cfg.obstacle)
    indices = cfg.index_list()
    if cfg.obstacle_shifts is None:
        shifts = [2.0 ** -n for n in indices]
    else:
        shifts = [float(s) for s in cfg.obstacle_shifts]
        if len(shifts) != len(indices):
            raise ValueError("need one obstacle shift per index")
    source = _as_source(cfg.source)
    u0 = _as_initial(cfg.u0)

    def solve_with(constraint):
        problem = VIProblem(space, cfg.coeffs, source, u0, cfg.grid, constraint)
        return problem, solve_parabolic_vi(problem)

    _, u_limit = solve_with(base)
    bound_limit = u_limit.norm_l2V()
    floor_val = 1e-7 * (1.0 + bound_limit)
    floors = {col: floor_val for col in NORM_KEYS}

    wt = cfg.grid.trapezoid_weights()
    S = space.stiffness_matrix

    def one(i_n):
        i, n = i_n
        constraint = base.shifted(shifts[i])
        problem, traj = solve_with(constraint)
        d = traj.values - u_limit.values
        v_sq = np.array([space.norm_V(r) ** 2 for r in d])
        h_sq = np.array([space.norm_H(r) ** 2 for r in d])
        g_sq = np.array([float(r @ (S @ r)) for r in d])
        errs = {
            "err_L2H1": float(np.sqrt(wt @ v_sq)),
            "err_CL2": float(np.sqrt(h_sq.max())),
            "err_grad": float(np.sqrt(wt @ g_sq)),
            "err_L2L2": float(np.sqrt(wt @ h_sq)),
        }
        margin = feasibility_report(traj, constraint).min_margin
        v_const = Trajectory(space, cfg.grid,
                             np.tile(problem.initial_field().coeffs,
                                     (cfg.grid.steps + 1, 1)))
        res_self = weak_vi_residual(traj, traj, problem)
        res_u0 = weak_vi_residual(traj, v_const, problem)
        return errs, traj.norm_l2V(), margin, res_self, res_u0

    pairs = list(enumerate(indices))
    if cfg.jobs and cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(one, pairs))
    else:
        results = [one(p) for p in pairs]

    errors = {col: [r[0][col] for r in results] for col in NORM_KEYS}
    verdicts = {col: _verdict(errors[col], floor_val) for col in NORM_KEYS}
    rates = {col: fit_rate(shifts, errors[col], floor_val) for col in NORM_KEYS}
    extras = {
        "bound_l2V": [r[1] for r in results],
        "bound_l2V_limit": bound_limit,
        "feasibility_margin": [r[2] for r in results],
        "weak_residual_self": [r[3] for r in results],
        "weak_residual_u0": [r[4] for r in results],
    }
    return ConvergenceReport("obstacle_shift", "vi", indices, shifts, errors,
                             floors, verdicts, rates, extras)


# ---------------------------------------------------------------------------
# manufactured-solution metric
# ---------------------------------------------------------------------------

def manufactured_error(traj, value, gradient):
    """Discretization error of a trajectory against a known solution.

    ``value(x, t)`` and ``gradient(x, t)`` give the exact solution and its
    spatial gradient.  Element errors use the edge-midpoint rule; returns
    ``(err_L2H1, err_CL2)``, the l2-in-time H1 error and the sup-in-time
    L2 error.
    """
    mesh = traj.space.mesh
    mids = mesh.edge_midpoints                     # (nt, 3, 2)
    flat = mids.reshape(-1, 2)
    w_el = mesh.areas / 3.0
    phi = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
    tri = mesh.triangles
    bg = mesh.barycentric_gradients
    h1_sq = np.empty(traj.grid.steps + 1)
    l2_sq = np.empty(traj.grid.steps + 1)
    for k, t in enumerate(traj.grid.nodes):
        vv = traj.field(k).vertex_values
        uh_mid = vv[tri] @ phi.T                   # (nt, 3) values at midpoints
        guh = np.einsum("tid,ti->td", bg, vv[tri])  # constant per element
        ex_mid = np.asarray(value(flat, t)).reshape(len(tri), 3)
        gex = np.asarray(gradient(flat, t)).reshape(len(tri), 3, 2)
        dval = uh_mid - ex_mid
        dgrad = guh[:, None, :] - gex
        l2_sq[k] = float(np.einsum("tq,t->", dval ** 2, w_el))
        h1_sq[k] = l2_sq[k] + float(np.einsum("tqd,t->", dgrad ** 2, w_el))
    wt = traj.grid.trapezoid_weights()
    return float(np.sqrt(wt @ h1_sq)), float(np.sqrt(l2_sq.max()))
