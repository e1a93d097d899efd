"""Parabolic variational inequalities with nodal obstacle constraints.

The constraint set is a nodal lower obstacle, K = {v : v_i >= psi_i}; its
H projection is the nodewise maximum.  Each implicit Euler step solves the
elliptic variational inequality

    u >= psi,   (B u - c)_i >= 0,   (B u - c)_i (u - psi)_i = 0,

with B = M + tau A(t_{k+1}).  The workhorse is projected Gauss-Seidel on
the symmetric part of B; a nonsymmetric form is handled by an outer
Richardson loop that freezes the antisymmetric part on the right hand
side.  Obstacle entries may be ``-inf`` to leave single nodes
unconstrained (free nodes are then held to the plain equation residual).
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fem import FEField, SolverError, assemble_load, interpolate
from .parabolic import Trajectory

__all__ = [
    "ConvexConstraint", "VIProblem", "FeasibilityReport", "project_H",
    "solve_obstacle", "solve_parabolic_vi", "weak_vi_residual",
    "feasibility_report",
]


class ConvexConstraint:
    """Nodal lower-obstacle constraint on a function space.

    ``psi`` may be an FEField, an array of nodal values, a callable of the
    dof coordinates, or a scalar.  Entries equal to ``-inf`` leave the node
    unconstrained.
    """

    def __init__(self, space, psi):
        if isinstance(psi, FEField):
            if psi.space is not space and psi.space != space:
                raise ValueError("obstacle lives on a different space")
            lower = psi.coeffs.copy()
        elif callable(psi):
            lower = np.asarray(psi(space.dof_coords), dtype=float)
        elif np.isscalar(psi):
            lower = np.full(space.n_dofs, float(psi))
        else:
            lower = np.asarray(psi, dtype=float).copy()
        if lower.shape != (space.n_dofs,):
            raise ValueError(f"obstacle needs {space.n_dofs} nodal values")
        if np.isnan(lower).any() or np.isposinf(lower).any():
            raise ValueError("obstacle values must be finite or -inf")
        self.space = space
        self.lower = lower
        self.lower.setflags(write=False)

    def project(self, coeffs):
        return np.maximum(np.asarray(coeffs, dtype=float), self.lower)

    def margin(self, coeffs):
        """Smallest slack ``u_i - psi_i`` over constrained nodes."""
        finite = np.isfinite(self.lower)
        if not finite.any():
            return np.inf
        return float((np.asarray(coeffs) - self.lower)[finite].min())

    def shifted(self, amount):
        return ConvexConstraint(self.space, self.lower + float(amount))

    def __repr__(self):
        nfin = int(np.isfinite(self.lower).sum())
        return f"ConvexConstraint(constrained={nfin}/{len(self.lower)})"


def project_H(w, constraint):
    """H projection onto the obstacle set: the nodewise maximum."""
    if isinstance(w, FEField):
        return FEField(w.space, constraint.project(w.coeffs))
    return constraint.project(w)


@dataclass
class VIProblem:
    """Parabolic variational inequality data (implicit Euler in time)."""
    space: object
    coeffs: object
    source: object
    u0: object
    grid: object
    constraint: ConvexConstraint

    def __post_init__(self):
        if self.constraint.space is not self.space and self.constraint.space != self.space:
            raise ValueError("constraint lives on a different space")

    def initial_field(self):
        if isinstance(self.u0, FEField):
            u0 = self.u0
        elif self.u0 is None:
            u0 = self.space.zero_field()
        else:
            u0 = interpolate(self.space, self.u0)
        if self.constraint.margin(u0.coeffs) < -1e-12:
            raise ValueError("initial datum violates the obstacle")
        return u0

    def load(self, t):
        if self.source is None:
            return np.zeros(self.space.n_dofs)
        return assemble_load(self.space, self.source, t)


@dataclass
class ObstacleInfo:
    sweeps: int
    outer_iterations: int
    min_residual: float
    complementarity: float


def _pgs_sweep(indptr, indices, data, diag, rhs, lower, u):
    """One projected Gauss-Seidel sweep in place; returns the max change."""
    change = 0.0
    for i in range(len(u)):
        row = slice(indptr[i], indptr[i + 1])
        ri = rhs[i] - data[row] @ u[indices[row]] + diag[i] * u[i]
        new = ri / diag[i]
        if new < lower[i]:
            new = lower[i]
        delta = abs(new - u[i])
        if delta > change:
            change = delta
        u[i] = new
    return change


def solve_obstacle(B, c, constraint, x0=None, tol_change=1e-10, tol_comp=1e-8,
                   max_sweeps=100_000, max_outer=200):
    """Solve the elliptic obstacle problem ``B u >= c`` style VI.

    Projected Gauss-Seidel runs on the symmetric part of ``B``; any
    antisymmetric remainder is frozen into the right hand side and updated
    by an outer Richardson loop.  Convergence requires the sweep change to
    fall below ``tol_change`` and the complementarity conditions on the
    full matrix to hold within ``tol_comp``.
    """
    B = sp.csr_matrix(B)
    n = B.shape[0]
    c = np.asarray(c, dtype=float)
    lower = constraint.lower if isinstance(constraint, ConvexConstraint) else np.asarray(constraint)
    Bs = (0.5 * (B + B.T)).tocsr()
    Ba = (B - Bs).tocsr()
    nonsym = Ba.nnz > 0 and np.abs(Ba.data).max() > 1e-14 * np.abs(B.data).max()
    diag = Bs.diagonal()
    if np.any(diag <= 0):
        raise SolverError("symmetric part must have positive diagonal")
    u = np.maximum(np.zeros(n) if x0 is None else np.array(x0, dtype=float), lower)
    np.nan_to_num(u, copy=False, neginf=0.0)
    finite = np.isfinite(lower)
    scale_c = 1.0 + float(np.linalg.norm(c))
    sweeps = 0
    indptr, indices, data = Bs.indptr, Bs.indices, Bs.data
    for outer in range(1, max_outer + 1):
        rhs = c - Ba @ u if nonsym else c
        u_prev = u.copy()
        while sweeps < max_sweeps:
            change = _pgs_sweep(indptr, indices, data, diag, rhs, lower, u)
            sweeps += 1
            if change <= tol_change * (1.0 + np.abs(u).max()):
                break
        res = B @ u - c
        slack = np.where(finite, u - lower, 0.0)
        comp = float(res[finite] @ slack[finite]) if finite.any() else 0.0
        scale = scale_c * (1.0 + float(np.linalg.norm(slack)))
        ok_sign = res[finite].min() >= -tol_comp * scale_c if finite.any() else True
        ok_free = (np.abs(res[~finite]).max() <= tol_comp * scale_c) if (~finite).any() else True
        ok_comp = abs(comp) <= 1e-6 * scale
        moved = float(np.abs(u - u_prev).max())
        ok_outer = (not nonsym) or moved <= tol_change * (1.0 + np.abs(u).max()) or outer == 1
        settled = moved <= 10 * tol_change * (1.0 + np.abs(u).max())
        if ok_sign and ok_free and ok_comp and (not nonsym or settled):
            info = ObstacleInfo(sweeps=sweeps, outer_iterations=outer,
                                min_residual=float(res[finite].min()) if finite.any() else 0.0,
                                complementarity=comp)
            return u, info
        if sweeps >= max_sweeps:
            break
    res = B @ u - c
    raise SolverError(
        f"projected Gauss-Seidel did not converge within {max_sweeps} sweeps "
        f"(min residual {float(res.min()):.3e}, complementarity "
        f"{float(res @ np.where(finite, u - lower, 0.0)):.3e})",
        residual=float(np.abs(res).max()), iterations=sweeps)


def solve_parabolic_vi(problem, tol_change=1e-10, tol_comp=1e-8,
                       max_sweeps=100_000):
    """Implicit Euler trajectory of a parabolic variational inequality.

    Every node satisfies the obstacle exactly; every step satisfies the
    discrete complementarity system within the given tolerances.
    """
    from .parabolic import _form_matrices
    space, grid = problem.space, problem.grid
    tau = grid.tau
    mass = space.mass_matrix
    mats = _form_matrices(problem)
    values = np.empty((grid.steps + 1, space.n_dofs))
    values[0] = problem.initial_field().coeffs
    static = not problem.coeffs.time_dependent
    B = (mass + tau * mats[0]).tocsr() if static else None
    for k in range(grid.steps):
        Bk = B if static else (mass + tau * mats[k + 1]).tocsr()
        c = mass @ values[k] + tau * problem.load(grid.nodes[k + 1])
        try:
            values[k + 1], _ = solve_obstacle(Bk, c, problem.constraint,
                                              x0=values[k],
                                              tol_change=tol_change,
                                              tol_comp=tol_comp,
                                              max_sweeps=max_sweeps)
        except SolverError as exc:
            raise SolverError(f"time step {k + 1}: {exc}",
                              residual=exc.residual,
                              iterations=exc.iterations) from exc
    return Trajectory(space, grid, values)


def weak_vi_residual(u, v, problem):
    """Value of the time-integrated variational inequality pairing.

    For the exact solution and any feasible comparison trajectory ``v``
    the value

        int <v', v - u> + <A(t) u, v - u> - <f, v - u> dt
            + 1/2 ||v(0) - u0||_H^2

    is nonnegative up to discretization; this evaluates it with the
    trapezoidal rule (the ``v'`` pairing is exact for piecewise linears).
    """
    from .parabolic import _form_matrices
    space, grid = problem.space, problem.grid
    if u.grid != grid or v.grid != grid:
        raise ValueError("trajectories must live on the problem grid")
    if feasibility_report(v, problem.constraint).min_margin < -1e-9:
        raise ValueError("comparison trajectory is infeasible")
    mass = space.mass_matrix
    mats = _form_matrices(problem)
    nodes = grid.nodes
    w = grid.trapezoid_weights()
    diff = v.values - u.values
    t1 = 0.0
    for k in range(grid.steps):
        dv = v.values[k + 1] - v.values[k]
        t1 += 0.5 * float(dv @ (mass @ (diff[k] + diff[k + 1])))
    au = np.array([float(diff[k] @ (mats[k] @ u.values[k])) for k in range(len(nodes))])
    fv = np.array([float(problem.load(t) @ d) for t, d in zip(nodes, diff)])
    t2 = float(w @ au)
    t3 = float(w @ fv)
    d0 = v.values[0] - problem.initial_field().coeffs
    t4 = 0.5 * float(d0 @ (mass @ d0))
    return t1 + t2 - t3 + t4


@dataclass
class FeasibilityReport:
    min_margin: float
    violations: list     # (node index, dof, margin) triples below tolerance
    ok: bool


def feasibility_report(traj, constraint, tol=1e-12):
    """Nodewise obstacle compliance of a trajectory."""
    finite = np.isfinite(constraint.lower)
    min_margin = np.inf
    violations = []
    for k, row in enumerate(traj.values):
        slack = (row - constraint.lower)[finite]
        if slack.size == 0:
            continue
        m = float(slack.min())
        min_margin = min(min_margin, m)
        bad = np.nonzero(slack < -tol)[0]
        for b in bad[:20]:
            violations.append((k, int(np.nonzero(finite)[0][b]), float(slack[b])))
    if not np.isfinite(min_margin):
        min_margin = np.inf
    return FeasibilityReport(min_margin=min_margin, violations=violations,
                             ok=len(violations) == 0)
