"""Variational solutions of non-autonomous parabolic equations.

The time stepper is the theta scheme on a uniform grid,

    (M + tau theta A_{k+1}) u^{k+1}
        = (M - tau (1 - theta) A_k) u^k + tau (theta b_{k+1} + (1 - theta) b_k),

with the form matrix sampled at the grid nodes and every linear system
solved by diagonally preconditioned BiCGStab to relative tolerance 1e-10.
``theta = 1`` (implicit Euler) is the default and the only scheme with an
exact discrete energy estimate:

    ||u^m||_H^2 + alpha sum tau ||u^k||_V^2
        <= ||u^0||_H^2 + alpha^-1 sum tau ||f_k||_{V'}^2,

which :func:`energy_estimate_check` verifies step by step whenever the form
is coercive without shift.  Weak-form residuals test a trajectory against
the distributional formulation with a scalar test profile vanishing at the
final time.
"""

import os
from dataclasses import dataclass

import numpy as np

from .fem import (FEField, FunctionSpace, SolverError, assemble_form,
                  assemble_load, estimate_form_constants, interpolate,
                  solve_linear)

__all__ = [
    "TimeGrid", "Trajectory", "TimeProfile", "ParabolicProblem",
    "EnergyReport", "solve_parabolic", "energy_estimate_check",
    "weak_residual", "integration_by_parts_check",
    "write_trajectory", "read_trajectory",
]


class TimeGrid:
    """Uniform time grid with ``steps`` intervals on ``[start, T]``."""

    def __init__(self, T, steps, start=0.0):
        T = float(T)
        start = float(start)
        steps = int(steps)
        if not T > start:
            raise ValueError("need T > start")
        if steps < 1:
            raise ValueError("need at least one time step")
        self.T = T
        self.start = start
        self.steps = steps
        self.tau = (T - start) / steps
        self.nodes = start + self.tau * np.arange(steps + 1)
        self.nodes.setflags(write=False)

    def trapezoid_weights(self):
        w = np.full(self.steps + 1, self.tau)
        w[0] = w[-1] = 0.5 * self.tau
        return w

    def __eq__(self, other):
        if not isinstance(other, TimeGrid):
            return NotImplemented
        return (self.T, self.start, self.steps) == (other.T, other.start, other.steps)

    def __repr__(self):
        return f"TimeGrid(T={self.T}, steps={self.steps}, start={self.start})"


class Trajectory:
    """Node values of a time-discrete field, one row per grid node."""

    def __init__(self, space, grid, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.steps + 1, space.n_dofs):
            raise ValueError(
                f"expected shape {(grid.steps + 1, space.n_dofs)}, got {values.shape}")
        if not np.isfinite(values).all():
            raise ValueError("trajectory values must be finite")
        self.space = space
        self.grid = grid
        self.values = values

    def field(self, k):
        return FEField(self.space, self.values[k])

    def norm_l2V(self):
        """Trapezoidal l2-in-time V norm."""
        w = self.grid.trapezoid_weights()
        sq = np.array([self.space.norm_V(u) ** 2 for u in self.values])
        return float(np.sqrt(w @ sq))

    def norm_l2H(self):
        w = self.grid.trapezoid_weights()
        sq = np.array([self.space.norm_H(u) ** 2 for u in self.values])
        return float(np.sqrt(w @ sq))

    def sup_H(self):
        return max(self.space.norm_H(u) for u in self.values)

    def __repr__(self):
        return f"Trajectory(steps={self.grid.steps}, n_dofs={self.space.n_dofs})"


class TimeProfile:
    """Scalar C1 test profile with an explicit derivative."""

    def __init__(self, value, derivative):
        self.value = value
        self.derivative = derivative

    def __call__(self, t):
        return self.value(t)

    @classmethod
    def poly_decay(cls, T, power=2):
        """(1 - t/T)^power, vanishing at T."""
        p = int(power)
        if p < 1:
            raise ValueError("power must be at least 1")
        return cls(lambda t: (1.0 - t / T) ** p,
                   lambda t: -(p / T) * (1.0 - t / T) ** (p - 1))

    @classmethod
    def cosine(cls, T):
        """cos(pi t / (2 T)), vanishing at T."""
        w = np.pi / (2.0 * T)
        return cls(lambda t: np.cos(w * t), lambda t: -w * np.sin(w * t))


@dataclass
class ParabolicProblem:
    """Data of a linear parabolic problem on a fixed space."""
    space: FunctionSpace
    coeffs: "CoefficientSet"
    source: object        # callable (x, t) -> values, or None for zero
    u0: object            # FEField or callable of x
    grid: TimeGrid
    theta: float = 1.0

    def __post_init__(self):
        if not 0.5 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [1/2, 1]")
        if self.grid.start != 0.0:
            raise ValueError("parabolic problems start at t = 0")

    def initial_field(self):
        if isinstance(self.u0, FEField):
            if self.u0.space is not self.space and self.u0.space != self.space:
                raise ValueError("u0 lives on a different space")
            return self.u0
        if self.u0 is None:
            return self.space.zero_field()
        return interpolate(self.space, self.u0)

    def load(self, t):
        if self.source is None:
            return np.zeros(self.space.n_dofs)
        return assemble_load(self.space, self.source, t)


def _form_matrices(problem):
    """Form matrix per grid node, assembled once for static coefficients."""
    nodes = problem.grid.nodes
    if problem.coeffs.time_dependent:
        return [assemble_form(problem.space, problem.coeffs, t) for t in nodes]
    A = assemble_form(problem.space, problem.coeffs, 0.0)
    return [A] * len(nodes)


def solve_parabolic(problem, tol=1e-10):
    """Run the theta scheme and return the trajectory (deterministic)."""
    space, grid, theta = problem.space, problem.grid, problem.theta
    tau = grid.tau
    mass = space.mass_matrix
    mats = _form_matrices(problem)
    loads = [problem.load(t) for t in grid.nodes]
    values = np.empty((grid.steps + 1, space.n_dofs))
    values[0] = problem.initial_field().coeffs
    static = not problem.coeffs.time_dependent
    lhs = (mass + tau * theta * mats[0]).tocsr() if static else None
    for k in range(grid.steps):
        A_new = mats[k + 1]
        mat = lhs if static else (mass + tau * theta * A_new).tocsr()
        rhs = mass @ values[k] + tau * (theta * loads[k + 1] + (1 - theta) * loads[k])
        if theta < 1.0:
            rhs -= tau * (1 - theta) * (mats[k] @ values[k])
        try:
            values[k + 1] = solve_linear(mat, rhs, x0=values[k], tol=tol)
        except SolverError as exc:
            raise SolverError(f"time step {k + 1}: {exc}",
                              residual=exc.residual,
                              iterations=exc.iterations) from exc
    return Trajectory(space, grid, values)


@dataclass
class EnergyReport:
    """Stepwise discrete energy balance of an implicit Euler trajectory."""
    alpha: float
    lhs: np.ndarray       # ||u^m||_H^2 + alpha sum tau ||u^k||_V^2
    rhs: np.ndarray       # ||u^0||_H^2 + alpha^-1 sum tau ||f_k||_{V'}^2
    margins: np.ndarray   # rhs - lhs, one entry per step
    ok: bool


def energy_estimate_check(traj, problem, tol=1e-10, constants=None):
    """Check the discrete energy estimate for an implicit Euler solution.

    Requires ``theta = 1`` and a form that is coercive without shift at the
    grid nodes (``lam_est = 0`` from :func:`estimate_form_constants`); the
    margins use the declared ellipticity constant and the discrete dual
    norm of the loads.
    """
    if problem.theta != 1.0:
        raise ValueError("the energy estimate holds for implicit Euler only")
    space, grid = problem.space, problem.grid
    if constants is None:
        constants = estimate_form_constants(space, problem.coeffs,
                                            n_samples=4, times=grid.nodes)
    if constants.lam_est > 1e-8:
        raise ValueError(
            f"form is not coercive without shift (lam_est = {constants.lam_est:.3g})")
    alpha = constants.alpha_est
    tau = grid.tau
    m = grid.steps
    lhs = np.empty(m)
    rhs = np.empty(m)
    acc_v = 0.0
    acc_f = 0.0
    h0 = space.norm_H(traj.values[0]) ** 2
    for k in range(1, m + 1):
        acc_v += tau * space.norm_V(traj.values[k]) ** 2
        acc_f += tau * space.dual_norm(problem.load(grid.nodes[k])) ** 2
        lhs[k - 1] = space.norm_H(traj.values[k]) ** 2 + alpha * acc_v
        rhs[k - 1] = h0 + acc_f / alpha
    margins = rhs - lhs
    ok = bool(np.all(margins >= -tol * (1.0 + np.abs(rhs))))
    return EnergyReport(alpha=alpha, lhs=lhs, rhs=rhs, margins=margins, ok=ok)


def weak_residual(traj, problem, v, phi):
    """Defect of the distributional weak form against one test pair.

    ``v`` is a fixed spatial test field, ``phi`` a scalar C1 profile with
    ``phi(T) = 0``.  Both sides are integrated with the trapezoidal rule on
    the trajectory's grid; the result is the absolute difference

        |-int (u, v) phi' + int a(t; u, v) phi
             - (u0, v) phi(0) - int <f, v> phi|.
    """
    space, grid = problem.space, problem.grid
    if v.space is not space and v.space != space:
        raise ValueError("test field lives on a different space")
    nodes = grid.nodes
    pv = np.array([phi(t) for t in nodes])
    if abs(pv[-1]) > 1e-12 * (1.0 + np.abs(pv).max()):
        raise ValueError("test profile must vanish at the final time")
    dpv = np.array([phi.derivative(t) for t in nodes])
    w = grid.trapezoid_weights()
    mass = space.mass_matrix
    mats = _form_matrices(problem)
    uv = traj.values @ (mass @ v.coeffs)
    auv = np.array([v.coeffs @ (mats[k] @ traj.values[k]) for k in range(len(nodes))])
    fv = np.array([problem.load(t) @ v.coeffs for t in nodes])
    lhs = -(w * dpv) @ uv + (w * pv) @ auv
    rhs = uv[0] * pv[0] + (w * pv) @ fv
    return float(abs(lhs - rhs))


def integration_by_parts_check(u, v, a0=0, b0=None):
    """Defect of the product rule for two trajectories on one grid.

    For piecewise linear interpolants the identity

        (u(t_b), v(t_b)) - (u(t_a), v(t_a)) = int <u', v> + <v', u> dt

    is exact; the right side is integrated interval by interval (trapezoid,
    exact for this integrand) and the absolute defect returned.
    """
    if u.grid != v.grid:
        raise ValueError("trajectories must share a time grid")
    if u.space is not v.space and u.space != v.space:
        raise ValueError("trajectories must share a space")
    if b0 is None:
        b0 = u.grid.steps
    if not 0 <= a0 < b0 <= u.grid.steps:
        raise ValueError("need 0 <= a0 < b0 <= steps")
    mass = u.space.mass_matrix
    lhs = float(u.values[b0] @ (mass @ v.values[b0]) - u.values[a0] @ (mass @ v.values[a0]))
    rhs = 0.0
    for k in range(a0, b0):
        du = u.values[k + 1] - u.values[k]
        dv = v.values[k + 1] - v.values[k]
        rhs += 0.5 * float(du @ (mass @ (v.values[k] + v.values[k + 1])))
        rhs += 0.5 * float(dv @ (mass @ (u.values[k] + u.values[k + 1])))
    return abs(lhs - rhs)


# ---------------------------------------------------------------------------
# trajectory files
# ---------------------------------------------------------------------------

def _fmt(x):
    return format(float(x), ".17g")


def write_trajectory(traj, directory):
    """Write ``traj.txt`` manifest plus one node file per time level."""
    if traj.grid.start != 0.0:
        raise ValueError("only trajectories starting at t = 0 are exportable")
    os.makedirs(directory, exist_ok=True)
    man = os.path.join(directory, "traj.txt")
    with open(man, "w") as fh:
        fh.write(f"traj {_fmt(traj.grid.T)} {traj.grid.steps} {traj.space.n_dofs}\n")
    for k in range(traj.grid.steps + 1):
        path = os.path.join(directory, f"field_{k:04d}.txt")
        with open(path, "w") as fh:
            fh.write("\n".join(_fmt(x) for x in traj.values[k]) + "\n")


def read_trajectory(directory, space):
    """Read a trajectory written by :func:`write_trajectory`."""
    man = os.path.join(directory, "traj.txt")
    with open(man) as fh:
        tok = fh.readline().split()
    if len(tok) != 4 or tok[0] != "traj":
        raise ValueError(f"{man}: expected header 'traj T M n_dofs'")
    T, steps, n_dofs = float(tok[1]), int(tok[2]), int(tok[3])
    if n_dofs != space.n_dofs:
        raise ValueError(f"{man}: dof count {n_dofs} does not match space {space.n_dofs}")
    grid = TimeGrid(T, steps)
    values = np.empty((steps + 1, n_dofs))
    for k in range(steps + 1):
        path = os.path.join(directory, f"field_{k:04d}.txt")
        with open(path) as fh:
            values[k] = [float(line) for line in fh.read().split()]
    return Trajectory(space, grid, values)
