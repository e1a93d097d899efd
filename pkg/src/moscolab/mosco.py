"""Common-domain embeddings and set-convergence diagnostics.

Fields on different perturbed domains become comparable after sampling on
a fixed midpoint lattice over the shared hold-all ball D: Dirichlet fields
extend by zero (values and gradients, a legitimate H1(D) extension), while
Neumann fields ship the raw value/gradient pair, which is not a
distributional gradient on D but supports the same product norm.

On top of the embeddings this module measures recovery defects (how well a
limit-domain field can be approximated from a perturbed domain, optionally
inside an obstacle set), provides the time-axis machinery used to
approximate time-dependent constraint sets (stretching, mollification,
partition-of-unity recovery from snapshots), and computes discrete
relative capacities of small sets by an obstacle problem on D.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse.linalg as spla

from .fem import FEField, FunctionSpace
from .parabolic import TimeGrid, Trajectory
from .vi import ConvexConstraint, solve_obstacle

__all__ = [
    "EMBED_DIRICHLET", "EMBED_NEUMANN", "HoldallGrid", "EmbeddedField",
    "EmbeddedTrajectory", "MoscoDefectSeries", "embed", "embed_trajectory",
    "m1_defect", "m1_defect_time", "stretch_time", "restrict_time",
    "mollify_time", "pou_recovery", "capacity", "segment_target",
    "write_defect_series",
]

EMBED_DIRICHLET = "dirichlet_zero_extension"
EMBED_NEUMANN = "neumann_pair"

#: default lattice cells per axis over the hold-all square
DEFAULT_DENSITY = 128


class HoldallGrid:
    """Midpoint sample lattice over the hold-all ball.

    Cell midpoints of a uniform ``n x n`` lattice over the bounding square
    are kept when they fall inside the open ball; the equal weights are
    rescaled so they sum exactly to the ball area.
    """

    def __init__(self, radius, n_cells=DEFAULT_DENSITY):
        radius = float(radius)
        if radius <= 0:
            raise ValueError("hold-all radius must be positive")
        n = int(n_cells)
        if n < 8:
            raise ValueError("need at least 8 lattice cells per axis")
        cell = 2.0 * radius / n
        centers = -radius + cell * (np.arange(n) + 0.5)
        xx, yy = np.meshgrid(centers, centers, indexing="ij")
        pts = np.column_stack([xx.ravel(), yy.ravel()])
        keep = (pts ** 2).sum(axis=1) < radius ** 2
        self.radius = radius
        self.n_cells = n
        self.points = pts[keep]
        area = math.pi * radius ** 2
        self.weights = np.full(len(self.points), area / len(self.points))
        self.points.setflags(write=False)
        self.weights.setflags(write=False)

    def __eq__(self, other):
        if not isinstance(other, HoldallGrid):
            return NotImplemented
        return self.radius == other.radius and self.n_cells == other.n_cells

    def __hash__(self):
        return hash((self.radius, self.n_cells))

    def __repr__(self):
        return f"HoldallGrid(radius={self.radius}, n_cells={self.n_cells}, samples={len(self.points)})"


@lru_cache(maxsize=8)
def _default_grid(radius, n_cells):
    return HoldallGrid(radius, n_cells)


def _grid_for(mesh, grid, n_cells):
    if grid is None:
        return _default_grid(mesh.holdall_radius, n_cells)
    if abs(grid.radius - mesh.holdall_radius) > 1e-9:
        raise ValueError(
            f"hold-all mismatch: grid radius {grid.radius} vs mesh {mesh.holdall_radius}")
    return grid


class _Embedder:
    """Precomputed sampling of one space on one hold-all grid."""

    def __init__(self, space, grid):
        mesh = space.mesh
        elems, bary = mesh.locator.locate_many(grid.points)
        self.space = space
        self.grid = grid
        self.inside = elems >= 0
        self.elems = np.where(self.inside, elems, 0)
        self.bary = bary
        self.tri_vertex = mesh.triangles[self.elems]

    def sample(self, field):
        vv = field.vertex_values
        vals = (vv[self.tri_vertex] * self.bary).sum(axis=1)
        vals[~self.inside] = 0.0
        mesh = self.space.mesh
        gelem = np.einsum("tid,ti->td", mesh.barycentric_gradients,
                          vv[mesh.triangles])
        grads = gelem[self.elems]
        grads[~self.inside] = 0.0
        return vals, grads


def _embedder(space, grid):
    cache = getattr(space, "_embedder_cache", None)
    if cache is None:
        cache = {}
        space._embedder_cache = cache
    key = (grid.radius, grid.n_cells)
    if key not in cache:
        cache[key] = _Embedder(space, grid)
    return cache[key]


class EmbeddedField:
    """Value and gradient samples of a field on the hold-all lattice."""

    def __init__(self, grid, kind, values, grads):
        self.grid = grid
        self.kind = kind
        self.values = values
        self.grads = grads

    def norm_l2(self):
        return float(np.sqrt(self.grid.weights @ self.values ** 2))

    def norm_grad(self):
        return float(np.sqrt(self.grid.weights @ (self.grads ** 2).sum(axis=1)))

    def norm_v(self):
        """H1(D) norm for zero extensions, pair product norm otherwise."""
        return float(np.sqrt(self.grid.weights @ (self.values ** 2 + (self.grads ** 2).sum(axis=1))))

    def __sub__(self, other):
        if self.grid != other.grid or self.kind != other.kind:
            raise ValueError("embedded fields live on different grids or kinds")
        return EmbeddedField(self.grid, self.kind, self.values - other.values,
                             self.grads - other.grads)


def _check_kind(space, kind):
    if kind not in (EMBED_DIRICHLET, EMBED_NEUMANN):
        raise ValueError(f"unknown embedding kind {kind!r}")
    if kind == EMBED_DIRICHLET and space.bc != "dirichlet":
        raise ValueError("zero extension is only valid for Dirichlet spaces")


def embed(field, kind, grid=None, n_cells=DEFAULT_DENSITY):
    """Sample a field over the hold-all ball (zeros outside its domain)."""
    _check_kind(field.space, kind)
    grid = _grid_for(field.space.mesh, grid, n_cells)
    vals, grads = _embedder(field.space, grid).sample(field)
    return EmbeddedField(grid, kind, vals, grads)


class EmbeddedTrajectory:
    """Embedded samples of a trajectory, one row per time node."""

    def __init__(self, grid, kind, time_grid, values, grads):
        self.grid = grid
        self.kind = kind
        self.time_grid = time_grid
        self.values = values      # (steps + 1, ns)
        self.grads = grads        # (steps + 1, ns, 2)

    def node(self, k):
        return EmbeddedField(self.grid, self.kind, self.values[k], self.grads[k])

    def distance(self, other, norm="l2_h1", sup_from=None):
        """Distance to another embedded trajectory on the same grids.

        Norms: ``l2_h1`` (l2 in time of the combined value/gradient norm),
        ``l2_l2``, ``l2_grad``, and ``sup_l2`` (max in time of the value
        norm, restricted to nodes at or after ``sup_from`` when given).
        """
        if self.grid != other.grid or self.kind != other.kind:
            raise ValueError("embedded trajectories live on different grids or kinds")
        if self.time_grid != other.time_grid:
            raise ValueError("embedded trajectories live on different time grids")
        dv = self.values - other.values
        dg = self.grads - other.grads
        wx = self.grid.weights
        val_sq = dv ** 2 @ wx
        grad_sq = np.einsum("ksd,s->k", dg ** 2, wx)
        wt = self.time_grid.trapezoid_weights()
        if norm == "l2_h1":
            return float(np.sqrt(wt @ (val_sq + grad_sq)))
        if norm == "l2_l2":
            return float(np.sqrt(wt @ val_sq))
        if norm == "l2_grad":
            return float(np.sqrt(wt @ grad_sq))
        if norm == "sup_l2":
            if sup_from is not None:
                keep = self.time_grid.nodes >= sup_from - 1e-12
                if not keep.any():
                    raise ValueError("sup_from lies beyond the time grid")
                val_sq = val_sq[keep]
            return float(np.sqrt(val_sq.max()))
        raise ValueError(f"unknown norm {norm!r}")

    def norm(self, norm="l2_h1"):
        zero = EmbeddedTrajectory(self.grid, self.kind, self.time_grid,
                                  np.zeros_like(self.values), np.zeros_like(self.grads))
        return self.distance(zero, norm)


def embed_trajectory(traj, kind, grid=None, n_cells=DEFAULT_DENSITY):
    """Embed every time node of a trajectory with one shared locator."""
    _check_kind(traj.space, kind)
    grid = _grid_for(traj.space.mesh, grid, n_cells)
    emb = _embedder(traj.space, grid)
    ns = len(grid.points)
    m = traj.grid.steps + 1
    values = np.empty((m, ns))
    grads = np.empty((m, ns, 2))
    for k in range(m):
        values[k], grads[k] = emb.sample(traj.field(k))
    return EmbeddedTrajectory(grid, kind, traj.grid, values, grads)


# ---------------------------------------------------------------------------
# recovery defects
# ---------------------------------------------------------------------------

class _M1Transfer:
    """Interpolate-project-smooth transfer from a limit space to a target."""

    #: side nudge for seam vertices and vertex snap radius
    NUDGE = 1e-9
    SNAP = 1e-8

    def __init__(self, source_space, target_space, constraint, kind, grid):
        _check_kind(source_space, kind)
        _check_kind(target_space, kind)
        if constraint is not None and constraint.space is not target_space \
                and constraint.space != target_space:
            raise ValueError("constraint must live on the target space")
        if abs(source_space.mesh.holdall_radius - target_space.mesh.holdall_radius) > 1e-9:
            raise ValueError("source and target must share the hold-all ball")
        self.source = source_space
        self.target = target_space
        self.constraint = constraint
        self.kind = kind
        self.grid = _grid_for(source_space.mesh, grid, DEFAULT_DENSITY)
        pts = target_space.dof_coords.copy()
        tmesh = target_space.mesh
        if len(tmesh.seams):
            shift = np.zeros(len(tmesh.vertices))
            shift[tmesh.seams[:, 0]] = self.NUDGE
            shift[tmesh.seams[:, 1]] = -self.NUDGE
            pts[:, 1] += shift[target_space.dof_vertices]
        elems, bary = source_space.mesh.locator.locate_many(pts, snap_dist=self.SNAP)
        self._inside = elems >= 0
        self._elems = np.where(self._inside, elems, 0)
        self._bary = bary
        self._tri_vertex = source_space.mesh.triangles[self._elems]
        areas = target_space.mesh.areas
        eps = 2.0 * float(np.median(areas))
        K = (eps * target_space.stiffness_matrix + target_space.mass_matrix).tocsc()
        self._smooth = spla.factorized(K)
        self._src_embedder = _Embedder(source_space, self.grid)
        self._tgt_embedder = _Embedder(target_space, self.grid)

    def interpolate(self, field):
        vv = field.vertex_values
        vals = (vv[self._tri_vertex] * self._bary).sum(axis=1)
        vals[~self._inside] = 0.0
        return vals

    def candidates(self, field):
        """Feasible transfer candidates on the target space."""
        w = self.interpolate(field)
        if self.constraint is not None:
            w = self.constraint.project(w)
        out = [w]
        ws = self._smooth(self.target.mass_matrix @ w)
        if self.constraint is not None:
            ws = self.constraint.project(ws)
        out.append(ws)
        return [FEField(self.target, c) for c in out]

    def defect(self, field):
        vals, grads = self._src_embedder.sample(field)
        eu = EmbeddedField(self.grid, self.kind, vals, grads)
        best = math.inf
        for cand in self.candidates(field):
            v, g = self._tgt_embedder.sample(cand)
            ew = EmbeddedField(self.grid, self.kind, v, g)
            best = min(best, (eu - ew).norm_v())
        return best


def m1_defect(u, target_space, constraint=None, kind=EMBED_DIRICHLET, grid=None):
    """Upper bound on the recovery defect of one limit-space field.

    The field is nodally interpolated onto the target space (seam vertices
    evaluate on their own side of a crack), projected onto the obstacle set
    when one is given, and optionally smoothed by one implicit Riesz step;
    the reported value is the smallest embedded V distance over the
    candidates, hence an upper bound on the true defect

        min_{w in K_target} || embed(u) - embed(w) ||_V(D).
    """
    transfer = _M1Transfer(u.space, target_space, constraint, kind, grid)
    return transfer.defect(u)


def m1_defect_time(traj, target_space, constraint=None, kind=EMBED_DIRICHLET,
                   grid=None):
    """Time-quadrature aggregate of nodewise recovery defects.

    Equals ``sqrt(T) * m1_defect`` exactly for constant trajectories.
    """
    transfer = _M1Transfer(traj.space, target_space, constraint, kind, grid)
    w = traj.grid.trapezoid_weights()
    defects = np.array([transfer.defect(traj.field(k))
                        for k in range(traj.grid.steps + 1)])
    return float(np.sqrt(w @ defects ** 2))


@dataclass
class MoscoDefectSeries:
    """Recovery defects along a domain family."""
    indices: list
    params: list
    defects: list
    norm_kind: str


def write_defect_series(path, series):
    """CSV export: ``n,param,defect,norm_kind``."""
    lines = ["n,param,defect,norm_kind"]
    for n, p, d in zip(series.indices, series.params, series.defects):
        lines.append(f"{n},{p:.17g},{d:.17g},{series.norm_kind}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# time-axis machinery
# ---------------------------------------------------------------------------

def stretch_time(traj, delta):
    """Affinely stretch a trajectory from [0, T] onto [-delta, T + delta].

    The stretching map sends t to ((T + 2 delta)/T) t - delta, so grid
    nodes map onto the stretched grid nodes and the node values carry over
    unchanged; ``delta = 0`` is the identity.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    g = traj.grid
    if g.start != 0.0:
        raise ValueError("stretch expects a trajectory starting at t = 0")
    if delta == 0.0:
        return Trajectory(traj.space, g, traj.values.copy())
    out = TimeGrid(g.T + delta, g.steps, start=-delta)
    return Trajectory(traj.space, out, traj.values.copy())


def restrict_time(traj, grid):
    """Resample a trajectory on a subinterval grid by linear interpolation."""
    g = traj.grid
    lo, hi = g.start, g.T
    tol = 1e-12 * (1 + abs(hi - lo))
    if grid.start < lo - tol or grid.T > hi + tol:
        raise ValueError("restriction grid must lie inside the trajectory interval")
    pos = (np.clip(grid.nodes, lo, hi) - lo) / g.tau
    k = np.minimum(pos.astype(int), g.steps - 1)
    w = pos - k
    values = (1.0 - w)[:, None] * traj.values[k] + w[:, None] * traj.values[k + 1]
    return Trajectory(traj.space, grid, values)


def _bump(s):
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


def mollify_time(traj, eps):
    """Discrete time mollification with the standard bump kernel.

    The trajectory is extended constantly outside its interval and
    convolved node by node with the normalized kernel ``exp(-1/(1-s^2))``
    scaled to width ``eps``.  Node values become convex combinations of
    nearby node values, so obstacle feasibility and constant trajectories
    are preserved exactly.  ``eps`` below one time step is rejected.
    """
    g = traj.grid
    if eps < g.tau * (1 - 1e-12):
        raise ValueError("mollifier width below the time step is unresolved")
    m = int(math.floor(eps / g.tau))
    js = np.arange(-m, m + 1)
    w = _bump(js * g.tau / eps)
    total = w.sum()
    if total <= 0:
        raise ValueError("empty mollification kernel")
    w /= total
    values = np.zeros_like(traj.values)
    for j, wj in zip(js, w):
        if wj == 0.0:
            continue
        idx = np.clip(np.arange(g.steps + 1) - j, 0, g.steps)
        values += wj * traj.values[idx]
    return Trajectory(traj.space, g, values)


def pou_recovery(snapshots, space, grid):
    """Recover a trajectory from time snapshots by a smooth partition of unity.

    ``snapshots`` is a sorted list of ``(time, field)`` pairs whose bump
    neighborhoods must cover the grid.  Each node value is the convex
    combination ``sum_i phi_i(t) v_i`` with smooth bumps ``phi_i`` summing
    to one, so snapshot feasibility is inherited nodewise.
    """
    if not snapshots:
        raise ValueError("need at least one snapshot")
    times = np.array([float(t) for t, _ in snapshots])
    if np.any(np.diff(times) < 0):
        raise ValueError("snapshot times must be sorted")
    fields = [f for _, f in snapshots]
    for f in fields:
        if f.space is not space and f.space != space:
            raise ValueError("snapshots live on a different space")
    nodes = grid.nodes
    if len(snapshots) == 1:
        values = np.tile(fields[0].coeffs, (len(nodes), 1))
        return Trajectory(space, grid, values)
    gaps = np.diff(times)
    radius = np.empty(len(times))
    radius[0] = gaps[0]
    radius[-1] = gaps[-1]
    if len(times) > 2:
        radius[1:-1] = np.maximum(gaps[:-1], gaps[1:])
    radius = 1.05 * np.maximum(radius, 1e-300)
    rho = np.stack([_bump((nodes - t) / r) for t, r in zip(times, radius)])
    total = rho.sum(axis=0)
    if np.any(total <= 0):
        bad = nodes[total <= 0][0]
        raise ValueError(f"snapshots do not cover the grid (gap at t = {bad:g})")
    phi = rho / total
    values = phi.T @ np.stack([f.coeffs for f in fields])
    return Trajectory(space, grid, values)


# ---------------------------------------------------------------------------
# capacity
# ---------------------------------------------------------------------------

def segment_target(mesh, a, b, dist):
    """Vertex ids within ``dist`` of the segment from ``a`` to ``b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ab = b - a
    denom = float(ab @ ab)
    v = mesh.vertices
    if denom == 0.0:
        d = np.sqrt(((v - a) ** 2).sum(axis=1))
    else:
        t = np.clip(((v - a) @ ab) / denom, 0.0, 1.0)
        proj = a + t[:, None] * ab
        d = np.sqrt(((v - proj) ** 2).sum(axis=1))
    return np.nonzero(d <= dist)[0]


def capacity(target, background):
    """Discrete relative capacity of a vertex set in the hold-all disk.

    Minimizes the squared H1 norm over discrete potentials that are at
    least one on the target vertices and vanish on the outer boundary (the
    background space must be Dirichlet).  Solved as an obstacle problem by
    projected Gauss-Seidel, warm started from the equality-constrained
    potential.  Empty targets have capacity zero; enlarging the target can
    only increase the value.
    """
    if not isinstance(background, FunctionSpace) or background.bc != "dirichlet":
        raise ValueError("capacity needs a Dirichlet background space")
    target = np.asarray(list(target), dtype=np.int64)
    if target.size == 0:
        return 0.0
    nv = len(background.mesh.vertices)
    if target.min() < 0 or target.max() >= nv:
        raise ValueError("target contains invalid vertex ids")
    dofs = background.dof_map[target]
    if np.any(dofs < 0):
        raise ValueError("target vertices must be interior to the background domain")
    B = background.v_matrix
    lower = np.full(background.n_dofs, -np.inf)
    lower[dofs] = 1.0
    # equality-constrained warm start: potential 1 on the target
    fixed = np.zeros(background.n_dofs, dtype=bool)
    fixed[dofs] = True
    free = ~fixed
    x0 = np.zeros(background.n_dofs)
    x0[fixed] = 1.0
    if free.any():
        Bff = B[free][:, free].tocsc()
        rhs = -np.asarray(B[free][:, fixed].sum(axis=1)).ravel()
        x0[free] = spla.spsolve(Bff, rhs)
    constraint = ConvexConstraint(background, lower)
    u, _ = solve_obstacle(B, np.zeros(background.n_dofs), constraint, x0=x0)
    return float(u @ (B @ u))
