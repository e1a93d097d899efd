"""P1 finite elements for time-dependent second order forms.

Spaces come in two flavors on the same mesh: ``dirichlet`` eliminates every
boundary vertex (crack lips included), ``neumann`` keeps all vertices, with
crack twins as distinct unknowns.  The assembled bilinear form is

    a(t; u, v) = int [a_ij d_j u + a_i u] d_i v + b_i d_i u v + c0 u v dx,

entry ``[k, l] = a(t; phi_l, phi_k)``, integrated with the midpoint rule
(degree 2, exact for P1 mass and stiffness with affine coefficients).

The discrete V norm is the full H1 norm for both flavors, realized by the
matrix ``stiffness + mass``; dual norms go through one Riesz solve with the
same matrix.
"""

import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.linalg
import scipy.sparse.linalg as spla

from .mesh import Mesh

__all__ = [
    "AssemblyError", "SolverError", "Coefficient", "CoefficientSet",
    "FunctionSpace", "FEField", "FormConstants", "assemble_form",
    "assemble_mass", "assemble_load", "solve_linear",
    "estimate_form_constants", "interpolate", "default_seed",
]

#: phi_l evaluated at the three edge midpoints, PHI[q, l]
_PHI = np.array([[0.5, 0.5, 0.0],
                 [0.0, 0.5, 0.5],
                 [0.5, 0.0, 0.5]])


class AssemblyError(ValueError):
    """Raised for coefficient sets violating their declared bounds."""


class SolverError(RuntimeError):
    """Raised when an iterative solve fails; carries the final residual."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


def default_seed():
    """Stochastic seed, overridable through the MOSCO_LAB_SEED variable."""
    return int(os.environ.get("MOSCO_LAB_SEED", "0"))


# ---------------------------------------------------------------------------
# coefficients
# ---------------------------------------------------------------------------

class Coefficient:
    """Named analytic scalar coefficient of space and time.

    Presets
    -------
    constant [c]
        c
    affine_x [c0, cx, cy]
        c0 + cx x1 + cy x2
    harmonic_t [c0, ca, cb, omega]
        c0 + ca cos(omega t) + cb sin(omega t)
    product [c0, cx, cy, d0, da, db, omega]
        (c0 + cx x1 + cy x2)(d0 + da cos(omega t) + db sin(omega t))
    """

    PRESETS = ("constant", "affine_x", "harmonic_t", "product")

    def __init__(self, name, params):
        if name not in self.PRESETS:
            raise AssemblyError(f"unknown coefficient preset {name!r}")
        expected = {"constant": 1, "affine_x": 3, "harmonic_t": 4, "product": 7}
        params = tuple(float(p) for p in params)
        if len(params) != expected[name]:
            raise AssemblyError(
                f"preset {name!r} takes {expected[name]} parameters, got {len(params)}")
        self.name = name
        self.params = params

    @classmethod
    def constant(cls, c):
        return cls("constant", (c,))

    @classmethod
    def affine(cls, c0, cx, cy):
        return cls("affine_x", (c0, cx, cy))

    @property
    def time_dependent(self):
        return self.name in ("harmonic_t", "product")

    def __call__(self, x, t):
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.name == "constant":
            return np.full(x.shape[0], p[0])
        if self.name == "affine_x":
            return p[0] + p[1] * x[:, 0] + p[2] * x[:, 1]
        if self.name == "harmonic_t":
            val = p[0] + p[1] * np.cos(p[3] * t) + p[2] * np.sin(p[3] * t)
            return np.full(x.shape[0], val)
        spatial = p[0] + p[1] * x[:, 0] + p[2] * x[:, 1]
        return spatial * (p[3] + p[4] * np.cos(p[6] * t) + p[5] * np.sin(p[6] * t))

    def __repr__(self):
        return f"Coefficient({self.name!r}, {self.params})"


def _as_coefficient(c):
    if isinstance(c, Coefficient):
        return c
    return Coefficient.constant(float(c))


class CoefficientSet:
    """Full coefficient tuple of the form with declared constants.

    Parameters
    ----------
    a : 2 x 2 nested sequence
        Principal part ``a_ij``, each entry a :class:`Coefficient` or number.
    a_lower, b : length-2 sequences
        First order coefficients multiplying ``u d_i v`` and ``d_i u v``.
    c0 : Coefficient or number
        Zeroth order coefficient.
    alpha, bound, shift : float
        Declared ellipticity constant of ``a_ij``, magnitude bound for all
        coefficients, and Garding shift.  The ellipticity and magnitude
        declarations are spot-checked on every assembly.
    """

    def __init__(self, a=None, a_lower=(0.0, 0.0), b=(0.0, 0.0), c0=0.0,
                 alpha=1.0, bound=1.0, shift=0.0):
        if a is None:
            a = ((1.0, 0.0), (0.0, 1.0))
        self.a = tuple(tuple(_as_coefficient(c) for c in row) for row in a)
        if len(self.a) != 2 or any(len(r) != 2 for r in self.a):
            raise AssemblyError("a must be a 2 x 2 coefficient array")
        self.a_lower = tuple(_as_coefficient(c) for c in a_lower)
        self.b = tuple(_as_coefficient(c) for c in b)
        if len(self.a_lower) != 2 or len(self.b) != 2:
            raise AssemblyError("a_lower and b must have two entries")
        self.c0 = _as_coefficient(c0)
        self.alpha = float(alpha)
        self.bound = float(bound)
        self.shift = float(shift)
        if self.alpha <= 0:
            raise AssemblyError("declared ellipticity alpha must be positive")

    @classmethod
    def laplacian(cls, diffusion=1.0, c0=0.0, alpha=None, bound=None, shift=0.0):
        """Isotropic diffusion plus optional reaction."""
        d = float(diffusion)
        c = _as_coefficient(c0)
        mag = max(abs(d), max(abs(v) for v in c.params), 1.0)
        return cls(a=((d, 0.0), (0.0, d)), c0=c,
                   alpha=d if alpha is None else alpha,
                   bound=mag if bound is None else bound, shift=shift)

    @property
    def scalars(self):
        return (self.a[0][0], self.a[0][1], self.a[1][0], self.a[1][1],
                *self.a_lower, *self.b, self.c0)

    @property
    def time_dependent(self):
        return any(c.time_dependent for c in self.scalars)

    def check_at(self, points, t):
        """Spot-check declared ellipticity and magnitude bound at points."""
        vals = [c(points, t) for c in self.scalars]
        mags = max(float(np.abs(v).max()) for v in vals)
        if mags > self.bound * (1 + 1e-9) + 1e-12:
            raise AssemblyError(
                f"coefficient magnitude {mags:.3g} exceeds declared bound {self.bound:.3g}")
        a11, a12, a21, a22 = vals[0], vals[1], vals[2], vals[3]
        # exact minimal eigenvalue of the symmetrized 2x2 principal part
        mean = 0.5 * (a11 + a22)
        rad = np.sqrt(0.25 * (a11 - a22) ** 2 + 0.25 * (a12 + a21) ** 2)
        emin = float((mean - rad).min())
        if emin < self.alpha * (1 - 1e-9) - 1e-12:
            raise AssemblyError(
                f"principal part eigenvalue {emin:.3g} below declared alpha {self.alpha:.3g}")


@dataclass(frozen=True)
class FormConstants:
    """Sampled continuity and coercivity constants of a form."""
    M_est: float
    alpha_est: float
    lam_est: float


# ---------------------------------------------------------------------------
# spaces and fields
# ---------------------------------------------------------------------------

class FunctionSpace:
    """P1 space on a mesh with Dirichlet or Neumann boundary handling."""

    def __init__(self, mesh, bc):
        if not isinstance(mesh, Mesh):
            raise TypeError("mesh must be a Mesh")
        if bc not in ("dirichlet", "neumann"):
            raise ValueError(f"bc must be 'dirichlet' or 'neumann', got {bc!r}")
        self.mesh = mesh
        self.bc = bc
        nv = len(mesh.vertices)
        dof_map = np.full(nv, -1, dtype=np.int64)
        if bc == "dirichlet":
            free = np.setdiff1d(np.arange(nv), mesh.boundary_vertices)
        else:
            free = np.arange(nv)
        dof_map[free] = np.arange(len(free))
        self.dof_map = dof_map
        self.dof_vertices = free
        self.n_dofs = len(free)

    @cached_property
    def dof_coords(self):
        return self.mesh.vertices[self.dof_vertices]

    @cached_property
    def mass_matrix(self):
        return assemble_mass(self)

    @cached_property
    def stiffness_matrix(self):
        pure = CoefficientSet(alpha=1.0, bound=1.0)
        return assemble_form(self, pure, 0.0)

    @cached_property
    def v_matrix(self):
        """Matrix of the discrete V inner product (stiffness + mass)."""
        return (self.stiffness_matrix + self.mass_matrix).tocsr()

    @cached_property
    def _riesz(self):
        return spla.factorized(self.v_matrix.tocsc())

    def norm_H(self, coeffs):
        return float(np.sqrt(max(coeffs @ (self.mass_matrix @ coeffs), 0.0)))

    def norm_V(self, coeffs):
        return float(np.sqrt(max(coeffs @ (self.v_matrix @ coeffs), 0.0)))

    def dual_norm(self, load):
        """Discrete V' norm of a load vector via one Riesz solve."""
        r = self._riesz(np.asarray(load, dtype=float))
        return float(np.sqrt(max(load @ r, 0.0)))

    def zero_field(self):
        return FEField(self, np.zeros(self.n_dofs))

    def __eq__(self, other):
        if not isinstance(other, FunctionSpace):
            return NotImplemented
        return self.bc == other.bc and (self.mesh is other.mesh or self.mesh == other.mesh)

    def __repr__(self):
        return f"FunctionSpace({self.mesh!r}, {self.bc!r}, n_dofs={self.n_dofs})"


class FEField:
    """Coefficient vector bound to a function space."""

    def __init__(self, space, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (space.n_dofs,):
            raise ValueError(f"expected {space.n_dofs} coefficients, got {coeffs.shape}")
        if not np.isfinite(coeffs).all():
            raise ValueError("field coefficients must be finite")
        self.space = space
        self.coeffs = coeffs

    def norm_H(self):
        return self.space.norm_H(self.coeffs)

    def norm_V(self):
        return self.space.norm_V(self.coeffs)

    @cached_property
    def vertex_values(self):
        """Values at all mesh vertices (eliminated vertices read zero)."""
        full = np.zeros(len(self.space.mesh.vertices))
        full[self.space.dof_vertices] = self.coeffs
        return full

    def __repr__(self):
        return f"FEField(n_dofs={len(self.coeffs)}, bc={self.space.bc!r})"


def interpolate(space, fn, t=0.0):
    """Nodal interpolation of ``fn(x)`` or ``fn(x, t)`` onto the space."""
    x = space.dof_coords
    try:
        vals = np.asarray(fn(x, t), dtype=float)
    except TypeError:
        vals = np.asarray(fn(x), dtype=float)
    if vals.shape != (space.n_dofs,):
        raise ValueError("interpolated function must return one value per point")
    return FEField(space, vals)


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

def _scatter(space, local):
    tri = space.mesh.triangles
    dof = space.dof_map[tri]                      # (nt, 3)
    rows = np.repeat(dof, 3, axis=1).ravel()      # k index varies slower
    cols = np.tile(dof, (1, 3)).ravel()
    vals = local.ravel()
    keep = (rows >= 0) & (cols >= 0)
    n = space.n_dofs
    mat = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, n)).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def assemble_form(space, coeffs, t=0.0):
    """Assemble the bilinear form matrix at time ``t`` (entry = a(phi_l, phi_k))."""
    mesh = space.mesh
    nt = len(mesh.triangles)
    g = mesh.barycentric_gradients                # (nt, 3, 2)
    qp = mesh.edge_midpoints.reshape(-1, 2)
    w = np.repeat(mesh.areas / 3.0, 3).reshape(nt, 3)
    coeffs.check_at(qp, t)

    def ev(c):
        return c(qp, t).reshape(nt, 3)

    abar = np.empty((nt, 2, 2))
    for i in range(2):
        for j in range(2):
            abar[:, i, j] = (w * ev(coeffs.a[i][j])).sum(axis=1)
    local = np.einsum("tki,tij,tlj->tkl", g, abar, g)

    if any(c.name != "constant" or c.params[0] != 0.0 for c in coeffs.a_lower):
        for i in range(2):
            ci = w * ev(coeffs.a_lower[i])        # (nt, q)
            cl = np.einsum("tq,ql->tl", ci, _PHI)
            local += g[:, :, i][:, :, None] * cl[:, None, :]
    if any(c.name != "constant" or c.params[0] != 0.0 for c in coeffs.b):
        for i in range(2):
            bi = w * ev(coeffs.b[i])
            bk = np.einsum("tq,qk->tk", bi, _PHI)
            local += bk[:, :, None] * g[:, :, i][:, None, :]
    if coeffs.c0.name != "constant" or coeffs.c0.params[0] != 0.0:
        c0 = w * ev(coeffs.c0)
        local += np.einsum("tq,qk,ql->tkl", c0, _PHI, _PHI)
    return _scatter(space, local)


def assemble_mass(space):
    """H inner product matrix, exact per-element closed form."""
    nt = len(space.mesh.triangles)
    base = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
    local = space.mesh.areas[:, None, None] * base[None, :, :]
    return _scatter(space, local.reshape(nt, 3, 3))


def assemble_load(space, f, t=0.0):
    """Load vector of an evaluable source, midpoint quadrature."""
    mesh = space.mesh
    nt = len(mesh.triangles)
    qp = mesh.edge_midpoints.reshape(-1, 2)
    try:
        fv = np.asarray(f(qp, t), dtype=float)
    except TypeError:
        fv = np.asarray(f(qp), dtype=float)
    if fv.shape != (qp.shape[0],):
        raise AssemblyError("source must return one value per evaluation point")
    fv = fv.reshape(nt, 3)
    w = np.repeat(mesh.areas / 3.0, 3).reshape(nt, 3)
    local = np.einsum("tq,qk->tk", w * fv, _PHI)
    vec = np.zeros(space.n_dofs)
    dof = space.dof_map[mesh.triangles]
    keep = dof >= 0
    np.add.at(vec, dof[keep], local[keep])
    return vec


# ---------------------------------------------------------------------------
# linear solver
# ---------------------------------------------------------------------------

def solve_linear(A, b, x0=None, tol=1e-10, maxiter=None):
    """BiCGStab with diagonal preconditioning.

    Converges to ``||A x - b|| <= tol ||b||``; raises :class:`SolverError`
    carrying the final residual after ``10 n`` iterations (or breakdown).
    The iteration is deterministic for identical inputs.
    """
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    n = len(b)
    if maxiter is None:
        maxiter = 10 * n
    normb = float(np.linalg.norm(b))
    if normb == 0.0:
        return np.zeros(n)
    target = tol * normb
    d = A.diagonal()
    minv = np.where(np.abs(d) > 1e-300, 1.0 / np.where(d == 0, 1.0, d), 1.0)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    if np.linalg.norm(r) <= target:
        return x
    rhat = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros(n)
    p = np.zeros(n)
    for it in range(1, maxiter + 1):
        rho_new = float(rhat @ r)
        if abs(rho_new) < 1e-300:
            rhat = r.copy()
            rho_new = float(rhat @ r)
            if rho_new == 0.0:
                break
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new
        p = r + beta * (p - omega * v)
        phat = minv * p
        v = A @ phat
        denom = float(rhat @ v)
        if abs(denom) < 1e-300:
            break
        alpha = rho / denom
        s = r - alpha * v
        if np.linalg.norm(s) <= target:
            xc = x + alpha * phat
            if np.linalg.norm(b - A @ xc) <= target * 1.0000001:
                return xc
        shat = minv * s
        tvec = A @ shat
        tt = float(tvec @ tvec)
        if tt == 0.0:
            break
        omega = float(tvec @ s) / tt
        x = x + alpha * phat + omega * shat
        r = s - omega * tvec
        if np.linalg.norm(r) <= target:
            r_true = b - A @ x
            if np.linalg.norm(r_true) <= target * 1.0000001:
                return x
            r = r_true
        if omega == 0.0:
            break
    res = float(np.linalg.norm(b - A @ x))
    raise SolverError(
        f"BiCGStab did not reach tol {tol:g} within {maxiter} iterations "
        f"(residual {res:.3e}, rhs norm {normb:.3e})",
        residual=res, iterations=maxiter)


# ---------------------------------------------------------------------------
# form constants
# ---------------------------------------------------------------------------

def _pencil_min_eig(K, B, seed):
    """Smallest eigenvalue of K u = mu B u, K symmetric, B SPD."""
    n = K.shape[0]
    if n <= 1500:
        e = scipy.linalg.eigh(K.toarray(), B.toarray(), subset_by_index=[0, 0],
                              eigvals_only=True, driver="gvx")
        return float(e[0])
    rng = np.random.default_rng(seed)
    x0 = rng.standard_normal((n, 1))
    vals, _ = spla.lobpcg(K.tocsr(), x0, B=B.tocsr(), largest=False,
                          tol=1e-9, maxiter=500)
    # Rayleigh-Ritz approximates from above; shave a safety margin
    return float(vals[0]) - 1e-9 * (1 + abs(float(vals[0])))


def estimate_form_constants(space, coeffs, n_samples=32, times=None, seed=None):
    """Sampled continuity and coercivity constants of the assembled form.

    ``M_est`` is the maximum of ``|a(t; u, v)|`` over random unit-V pairs,
    never above the true discrete bound.  ``alpha_est`` echoes the declared
    ellipticity and ``lam_est`` is the smallest shift making

        a(t; u, u) + lam ||u||_H^2 >= alpha ||u||_V^2

    hold for every discrete u at the sampled times, computed from the
    smallest eigenvalue of the symmetrized pencil against the mass matrix.
    """
    if seed is None:
        seed = default_seed()
    if times is None:
        times = np.linspace(0.0, 1.0, 5) if coeffs.time_dependent else [0.0]
    rng = np.random.default_rng(seed)
    mass = space.mass_matrix
    vmat = space.v_matrix
    alpha = coeffs.alpha
    m_est = 0.0
    lam_est = 0.0
    pairs = [(rng.standard_normal(space.n_dofs), rng.standard_normal(space.n_dofs))
             for _ in range(n_samples)]
    for t in times:
        A = assemble_form(space, coeffs, t)
        for u, v in pairs:
            un = u / max(space.norm_V(u), 1e-300)
            vn = v / max(space.norm_V(v), 1e-300)
            m_est = max(m_est, abs(float(vn @ (A @ un))))
        K = (0.5 * (A + A.T) - alpha * vmat).tocsr()
        e = _pencil_min_eig(K, mass, seed)
        lam_est = max(lam_est, -e)
    return FormConstants(M_est=m_est, alpha_est=alpha, lam_est=max(0.0, lam_est))
