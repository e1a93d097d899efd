"""Triangulated domains for perturbation studies.

This module builds the conforming P1 triangulations used everywhere else:
a unit disk with a radial crack of variable length, a dumbbell with a
shrinking handle, a disk with a fixed circular hole, and plain rectangles.
Cracks are represented by duplicated seam vertices, so a mesh function may
jump across a crack while staying continuous around the crack tip.

All meshes are immutable after construction and carry the radius of the
hold-all ball used for common-domain comparisons.  A line-oriented text
format (header ``mesh2d nv nt nb ns``) round-trips meshes bit-exactly.
"""

import math
from functools import cached_property

import numpy as np
from scipy.spatial import Delaunay

__all__ = [
    "MeshError",
    "Mesh",
    "DomainFamily",
    "generate_cracked_disk",
    "generate_dumbbell",
    "generate_fixed_hole",
    "generate_disk",
    "generate_rectangle",
    "locate_point",
    "read_mesh",
    "write_mesh",
]

#: geometric tolerance for point location and construction checks
TOL_GEO = 1e-12

#: boundary tags used by the generators
TAG_OUTER = "outer"
TAG_HOLE = "hole"
TAG_CRACK_UPPER = "crack_upper"
TAG_CRACK_LOWER = "crack_lower"


class MeshError(ValueError):
    """Raised for invalid mesh parameters or inconsistent mesh data."""


def _holdall_radius(vertices):
    # Disk-based domains sit inside the unit ball; anything larger gets a
    # 1.5x bounding ball.  read_mesh relies on this rule being reproducible.
    rmax = float(np.sqrt((vertices ** 2).sum(axis=1)).max()) if len(vertices) else 1.0
    if rmax <= 1.0 + 1e-9:
        return 1.0
    return 1.5 * rmax


class Mesh:
    """Conforming triangle mesh with tagged boundary and crack seams.

    Parameters
    ----------
    vertices : (nv, 2) float array
        Vertex coordinates.  Seam twins repeat coordinates exactly.
    triangles : (nt, 3) int array
        Counterclockwise vertex triples.
    boundary_edges : (nb, 2) int array
        Edges adjacent to exactly one triangle.
    boundary_tags : sequence of str
        One tag per boundary edge (``outer``, ``hole``, ``crack_upper``,
        ``crack_lower``).
    seams : (ns, 2) int array
        Pairs ``(upper, lower)`` of topologically distinct vertices with
        identical coordinates.
    holdall_radius : float, optional
        Radius of the ball all vertices must lie in.  Inferred from the
        vertices when omitted.
    """

    def __init__(self, vertices, triangles, boundary_edges, boundary_tags,
                 seams=None, holdall_radius=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        self.boundary_edges = np.ascontiguousarray(boundary_edges, dtype=np.int64).reshape(-1, 2)
        self.boundary_tags = np.asarray(list(boundary_tags), dtype="U16")
        if seams is None:
            seams = np.zeros((0, 2), dtype=np.int64)
        self.seams = np.ascontiguousarray(seams, dtype=np.int64).reshape(-1, 2)
        if holdall_radius is None:
            holdall_radius = _holdall_radius(self.vertices)
        self.holdall_radius = float(holdall_radius)
        self._validate()
        for arr in (self.vertices, self.triangles, self.boundary_edges, self.seams):
            arr.setflags(write=False)

    # -- construction checks -------------------------------------------------

    def _validate(self):
        nv = len(self.vertices)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshError("vertices must be an (nv, 2) array")
        if not np.isfinite(self.vertices).all():
            raise MeshError("vertex coordinates must be finite")
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= nv):
            raise MeshError("triangle indices out of range")
        if len(self.boundary_tags) != len(self.boundary_edges):
            raise MeshError("one tag per boundary edge required")
        if np.any(self.signed_areas <= TOL_GEO):
            raise MeshError("all triangles must be counterclockwise with positive area")
        r = np.sqrt((self.vertices ** 2).sum(axis=1))
        if np.any(r > self.holdall_radius * (1 + 1e-9)):
            raise MeshError("vertices must lie inside the hold-all ball")
        # edge incidence: every edge in at most two triangles, boundary edges
        # exactly the ones seen once
        counts = {}
        for tri in self.triangles:
            for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
                key = (min(a, b), max(a, b))
                counts[key] = counts.get(key, 0) + 1
        if counts and max(counts.values()) > 2:
            raise MeshError("an edge is shared by more than two triangles")
        seen_once = {k for k, c in counts.items() if c == 1}
        declared = {(min(a, b), max(a, b)) for a, b in self.boundary_edges}
        if seen_once != declared:
            raise MeshError("boundary edge list does not match triangle incidence")
        for p, q in self.seams:
            if not np.array_equal(self.vertices[p], self.vertices[q]):
                raise MeshError("seam pairs must share identical coordinates")

    # -- derived geometry ----------------------------------------------------

    @cached_property
    def tri_vertices(self):
        """(nt, 3, 2) coordinates of each triangle's vertices."""
        return self.vertices[self.triangles]

    @cached_property
    def signed_areas(self):
        tv = self.vertices[self.triangles]
        e1 = tv[:, 1] - tv[:, 0]
        e2 = tv[:, 2] - tv[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @cached_property
    def areas(self):
        """(nt,) positive triangle areas."""
        return np.abs(self.signed_areas)

    @cached_property
    def barycentric_gradients(self):
        """(nt, 3, 2) constant gradients of the barycentric coordinates."""
        tv = self.tri_vertices
        g = np.empty((len(self.triangles), 3, 2))
        # grad(lambda_i) is the rotated opposite edge over twice the area
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            edge = tv[:, k] - tv[:, j]
            g[:, i, 0] = -edge[:, 1]
            g[:, i, 1] = edge[:, 0]
        g /= (2.0 * self.signed_areas)[:, None, None]
        return g

    @cached_property
    def edge_midpoints(self):
        """(nt, 3, 2) midpoint quadrature nodes of each triangle."""
        tv = self.tri_vertices
        mids = np.empty_like(tv)
        mids[:, 0] = 0.5 * (tv[:, 0] + tv[:, 1])
        mids[:, 1] = 0.5 * (tv[:, 1] + tv[:, 2])
        mids[:, 2] = 0.5 * (tv[:, 2] + tv[:, 0])
        return mids

    @cached_property
    def boundary_vertices(self):
        """Sorted ids of vertices incident to at least one boundary edge."""
        if len(self.boundary_edges) == 0:
            return np.zeros(0, dtype=np.int64)
        return np.unique(self.boundary_edges)

    @cached_property
    def area(self):
        """Total mesh area."""
        return float(self.areas.sum())

    @cached_property
    def _upper_priority(self):
        # triangles touching an upper seam vertex win point-location ties on
        # the crack line
        flag = np.zeros(len(self.triangles), dtype=bool)
        if len(self.seams):
            upper = np.zeros(len(self.vertices), dtype=bool)
            upper[self.seams[:, 0]] = True
            flag = upper[self.triangles].any(axis=1)
        return flag

    @cached_property
    def locator(self):
        return Locator(self)

    # -- misc ----------------------------------------------------------------

    def __eq__(self, other):
        if not isinstance(other, Mesh):
            return NotImplemented
        return (np.array_equal(self.vertices, other.vertices)
                and np.array_equal(self.triangles, other.triangles)
                and np.array_equal(self.boundary_edges, other.boundary_edges)
                and np.array_equal(self.boundary_tags, other.boundary_tags)
                and np.array_equal(self.seams, other.seams)
                and self.holdall_radius == other.holdall_radius)

    def __repr__(self):
        return (f"Mesh(nv={len(self.vertices)}, nt={len(self.triangles)}, "
                f"nb={len(self.boundary_edges)}, ns={len(self.seams)})")


class Locator:
    """Uniform-bin point location with crack-aware tie breaking."""

    def __init__(self, mesh, cells_per_axis=None):
        self.mesh = mesh
        tv = mesh.tri_vertices
        nt = len(mesh.triangles)
        if cells_per_axis is None:
            cells_per_axis = max(4, int(math.sqrt(max(nt, 1))))
        lo = tv.reshape(-1, 2).min(axis=0)
        hi = tv.reshape(-1, 2).max(axis=0)
        span = np.maximum(hi - lo, 1e-30)
        self._lo = lo
        self._cell = span / cells_per_axis
        self._n = cells_per_axis
        tmin = np.floor((tv.min(axis=1) - lo) / self._cell).astype(int)
        tmax = np.floor((tv.max(axis=1) - lo) / self._cell).astype(int)
        np.clip(tmin, 0, cells_per_axis - 1, out=tmin)
        np.clip(tmax, 0, cells_per_axis - 1, out=tmax)
        bins = {}
        for t in range(nt):
            for ix in range(tmin[t, 0], tmax[t, 0] + 1):
                for iy in range(tmin[t, 1], tmax[t, 1] + 1):
                    bins.setdefault(ix * cells_per_axis + iy, []).append(t)
        self._bins = {k: np.asarray(v, dtype=np.int64) for k, v in bins.items()}
        # affine maps x -> barycentric(1, 2)
        v0 = tv[:, 0]
        cols = np.stack([tv[:, 1] - v0, tv[:, 2] - v0], axis=2)
        self._v0 = v0
        self._inv = np.linalg.inv(cols)

    def locate_many(self, points, snap_dist=0.0):
        """Locate many points at once.

        Returns ``(elems, bary)`` where ``elems[i] < 0`` marks a point outside
        the mesh.  Points on a crack line resolve to the upper lip.  With
        ``snap_dist > 0`` a query within that distance of a vertex of its
        containing triangle snaps to the pure vertex (barycentric 0/1).
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n = len(pts)
        elems = np.full(n, -1, dtype=np.int64)
        bary = np.zeros((n, 3))
        margin = 1e-9 * float(self._cell.max()) * self._n
        hi = self._lo + self._cell * self._n
        inside_box = ((pts >= self._lo - margin) & (pts <= hi + margin)).all(axis=1)
        cell_ids = np.floor((pts - self._lo) / self._cell).astype(int)
        np.clip(cell_ids, 0, self._n - 1, out=cell_ids)
        keys = cell_ids[:, 0] * self._n + cell_ids[:, 1]
        keys[~inside_box] = -1
        upper = self.mesh._upper_priority
        order = np.argsort(keys, kind="stable")
        i = 0
        while i < n:
            j = i
            key = keys[order[i]]
            while j < n and keys[order[j]] == key:
                j += 1
            idx = order[i:j]
            i = j
            if key < 0:
                continue
            cand = self._bins.get(int(key))
            if cand is None:
                continue
            p = pts[idx]
            d = p[:, None, :] - self._v0[cand][None, :, :]
            lam12 = np.einsum("tji,pti->ptj", self._inv[cand], d)
            lam0 = 1.0 - lam12.sum(axis=2)
            lam = np.concatenate([lam0[:, :, None], lam12], axis=2)
            ok = (lam >= -TOL_GEO).all(axis=2)
            minb = np.where(ok, lam.min(axis=2), -np.inf)
            # preference: containing, upper-lip triangles first, most interior
            score = minb + np.where(upper[cand][None, :], 1.0, 0.0)
            best = np.argmax(np.where(ok, score, -np.inf), axis=1)
            hit = ok[np.arange(len(idx)), best]
            elems[idx[hit]] = cand[best[hit]]
            bary[idx[hit]] = lam[np.arange(len(idx)), best][hit]
        if snap_dist > 0.0:
            self._snap(pts, elems, bary, snap_dist)
        np.clip(bary, 0.0, 1.0, out=bary)
        s = bary.sum(axis=1)
        good = elems >= 0
        bary[good] /= s[good][:, None]
        bary[~good] = 0.0
        return elems, bary

    def _snap(self, pts, elems, bary, snap_dist):
        good = np.nonzero(elems >= 0)[0]
        if len(good) == 0:
            return
        tv = self.mesh.tri_vertices[elems[good]]
        d = np.sqrt(((tv - pts[good][:, None, :]) ** 2).sum(axis=2))
        nearest = np.argmin(d, axis=1)
        close = d[np.arange(len(good)), nearest] <= snap_dist
        rows = good[close]
        bary[rows] = 0.0
        bary[rows, nearest[close]] = 1.0


def locate_point(mesh, point, snap_dist=0.0):
    """Locate a single point.

    Returns ``(element, barycentric)`` or ``None`` when the point is outside
    the mesh.  Crack-line queries resolve to the upper lip.
    """
    elems, bary = mesh.locator.locate_many(np.asarray(point, dtype=float)[None, :],
                                           snap_dist=snap_dist)
    if elems[0] < 0:
        return None
    return int(elems[0]), bary[0]


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def _check_h(h, hmax, what):
    if not (0 < h <= hmax + 1e-12):
        raise MeshError(f"{what}: mesh size h={h} must lie in (0, {hmax}]")


def _boundary_edges_of(triangles):
    counts = {}
    for t, tri in enumerate(triangles):
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(a, b), max(a, b))
            if key in counts:
                counts[key] = None
            else:
                counts[key] = t
    return {k: t for k, t in counts.items() if t is not None}


def _orient_ccw(vertices, triangles):
    tv = vertices[triangles]
    e1 = tv[:, 1] - tv[:, 0]
    e2 = tv[:, 2] - tv[:, 0]
    neg = (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]) < 0
    triangles = triangles.copy()
    triangles[neg] = triangles[neg][:, [0, 2, 1]]
    return triangles


def _slit_points(delta, h):
    # graded spacing away from the tip so short slits stay resolved even
    # when delta < 2h
    length = 1.0 - delta
    s0 = h if delta == 0.0 else max(min(h, 0.5 * delta), h / 8.0)
    incs = []
    acc, s = 0.0, s0
    while acc + s < length:
        incs.append(s)
        acc += s
        s = min(h, 1.4 * s)
    incs.append(length - acc)
    if len(incs) > 1 and incs[-1] < 0.5 * incs[-2]:
        incs[-2] += incs.pop()
    xs = delta + np.concatenate([[0.0], np.cumsum(incs)])
    xs[-1] = 1.0
    return xs


def _hex_lattice(h, radius=1.0):
    dy = h * math.sqrt(3.0) / 2.0
    kmax = int(math.floor(radius / dy))
    rows = []
    for k in range(-kmax, kmax + 1):
        y = k * dy
        off = 0.0 if k % 2 == 0 else 0.5 * h
        jmax = int(math.floor((radius + h) / h))
        x = off + h * np.arange(-jmax, jmax + 1)
        rows.append(np.column_stack([x, np.full_like(x, y)]))
    return np.concatenate(rows)


def _dist_to_segment(points, a, b):
    ab = b - a
    t = np.clip(((points - a) @ ab) / (ab @ ab), 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.sqrt(((points - proj) ** 2).sum(axis=1))


def _disk_cloud(h, slit_xs=None):
    nb = max(16, int(math.ceil(2 * math.pi / h)))
    theta = 2 * math.pi * np.arange(nb) / nb
    circle = np.column_stack([np.cos(theta), np.sin(theta)])
    circle[0] = (1.0, 0.0)
    pts = [circle]
    if slit_xs is not None:
        interior = slit_xs[:-1]  # x = 1 reuses circle vertex 0
        pts.append(np.column_stack([interior, np.zeros_like(interior)]))
    lattice = _hex_lattice(h)
    keep = np.sqrt((lattice ** 2).sum(axis=1)) <= 1.0 - 0.55 * h
    lattice = lattice[keep]
    if slit_xs is not None:
        spacing = np.empty_like(slit_xs)
        spacing[:-1] = np.diff(slit_xs)
        spacing[-1] = spacing[-2] if len(slit_xs) > 1 else h
        d = _dist_to_segment(lattice, np.array([slit_xs[0], 0.0]), np.array([1.0, 0.0]))
        s_loc = np.interp(lattice[:, 0], slit_xs, spacing)
        lattice = lattice[d >= 0.6 * np.minimum(h, 1.2 * s_loc)]
    pts.append(lattice)
    cloud = np.concatenate(pts)
    n_circle = nb
    n_slit = 0 if slit_xs is None else len(slit_xs) - 1
    return cloud, n_circle, n_slit


def generate_disk(h):
    """Unstructured triangulation of the open unit disk."""
    _check_h(h, 0.125, "disk")
    cloud, _, _ = _disk_cloud(h)
    tris = _orient_ccw(cloud, Delaunay(cloud).simplices.astype(np.int64))
    edges = _boundary_edges_of(tris)
    be = np.array(sorted(edges.keys()), dtype=np.int64).reshape(-1, 2)
    tags = [TAG_OUTER] * len(be)
    return Mesh(cloud, tris, be, tags)


def generate_cracked_disk(delta, h):
    """Unit disk with a radial crack from ``(delta, 0)`` to the boundary.

    The crack ``{(x, 0) : delta <= x < 1}`` is realized by seam vertices:
    every crack vertex right of the tip exists twice, once per lip, so P1
    functions can jump across the crack while remaining continuous at the
    tip.  ``delta = 0`` gives the fully cracked disk used as family limit.

    Parameters
    ----------
    delta : float
        Crack tip abscissa, ``0 <= delta < 1``.
    h : float
        Target mesh size, ``h <= 1/8``.  The slit grading resolves tips
        closer than ``2h`` to the origin.
    """
    if not (0.0 <= delta < 1.0):
        raise MeshError(f"cracked_disk: delta={delta} must lie in [0, 1)")
    _check_h(h, 0.125, "cracked_disk (tip resolution)")
    slit_xs = _slit_points(delta, h)
    cloud, n_circle, n_slit = _disk_cloud(h, slit_xs)
    tris = _orient_ccw(cloud, Delaunay(cloud).simplices.astype(np.int64))

    # crack vertices ordered from tip to the boundary vertex (1, 0); the tip
    # keeps a single copy, everything to its right gets a lip twin
    slit_ids = list(range(n_circle, n_circle + n_slit)) + [0]
    dup_ids = slit_ids[1:]
    vertices = list(map(tuple, cloud))
    seams = []
    twin = {}
    for v in dup_ids:
        twin[v] = len(vertices)
        vertices.append(tuple(cloud[v]))
        seams.append((v, twin[v]))
    vertices = np.asarray(vertices)
    cy = cloud[tris].mean(axis=1)[:, 1]
    for t in range(len(tris)):
        row = tris[t]
        if any(v in twin for v in row):
            if abs(cy[t]) <= TOL_GEO:
                raise MeshError("cracked_disk: triangle straddles the crack line")
            if cy[t] < 0:
                tris[t] = [twin.get(v, v) for v in row]

    edges = _boundary_edges_of(tris)
    be, tags = [], []
    centroids = vertices[tris].mean(axis=1)
    for (a, b), t in sorted(edges.items()):
        pa, pb = vertices[a], vertices[b]
        on_slit = (abs(pa[1]) <= TOL_GEO and abs(pb[1]) <= TOL_GEO
                   and min(pa[0], pb[0]) >= delta - TOL_GEO)
        be.append((a, b))
        if on_slit:
            tags.append(TAG_CRACK_UPPER if centroids[t][1] > 0 else TAG_CRACK_LOWER)
        else:
            tags.append(TAG_OUTER)
    return Mesh(vertices, tris, np.asarray(be, dtype=np.int64), tags,
                seams=np.asarray(seams, dtype=np.int64))


def generate_fixed_hole(radius, h):
    """Structured annulus: unit disk minus the closed ball of given radius.

    Used as a family that is constant in n whose declared limit is the full
    disk, the standard negative control for convergence studies.
    """
    if not (0.0 < radius <= 0.5):
        raise MeshError(f"fixed_hole: radius={radius} must lie in (0, 0.5]")
    _check_h(h, 0.125, "fixed_hole")
    nr = max(2, int(math.ceil((1.0 - radius) / h)))
    ntheta = max(16, int(math.ceil(math.pi * (1.0 + radius) / h)))
    r = radius + (1.0 - radius) * np.arange(nr + 1) / nr
    theta = 2 * math.pi * np.arange(ntheta) / ntheta
    rr, tt = np.meshgrid(r, theta, indexing="ij")
    vertices = np.column_stack([(rr * np.cos(tt)).ravel(), (rr * np.sin(tt)).ravel()])
    vid = np.arange((nr + 1) * ntheta).reshape(nr + 1, ntheta)
    tris = []
    for i in range(nr):
        for j in range(ntheta):
            jn = (j + 1) % ntheta
            v00, v10 = vid[i, j], vid[i + 1, j]
            v11, v01 = vid[i + 1, jn], vid[i, jn]
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    tris = _orient_ccw(vertices, np.asarray(tris, dtype=np.int64))
    be, tags = [], []
    for j in range(ntheta):
        jn = (j + 1) % ntheta
        be.append((vid[0, j], vid[0, jn]))
        tags.append(TAG_HOLE)
        be.append((vid[nr, j], vid[nr, jn]))
        tags.append(TAG_OUTER)
    return Mesh(vertices, tris, np.asarray(be, dtype=np.int64), tags)


def _grid_block(xs, ys, vertex_of, vertices, tris):
    # structured block on the tensor grid xs x ys, sharing vertices through
    # the coordinate-keyed map vertex_of
    ids = np.empty((len(xs), len(ys)), dtype=np.int64)
    for i, x in enumerate(xs):
        for j, y in enumerate(ys):
            key = (float(x), float(y))
            if key not in vertex_of:
                vertex_of[key] = len(vertices)
                vertices.append(key)
            ids[i, j] = vertex_of[key]
    for i in range(len(xs) - 1):
        for j in range(len(ys) - 1):
            v00, v10 = ids[i, j], ids[i + 1, j]
            v11, v01 = ids[i + 1, j + 1], ids[i, j + 1]
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))


def _mesh_from_blocks(blocks):
    vertex_of, vertices, tris = {}, [], []
    for xs, ys in blocks:
        _grid_block(xs, ys, vertex_of, vertices, tris)
    vertices = np.asarray(vertices)
    tris = _orient_ccw(vertices, np.asarray(tris, dtype=np.int64))
    edges = _boundary_edges_of(tris)
    be = np.array(sorted(edges.keys()), dtype=np.int64).reshape(-1, 2)
    tags = [TAG_OUTER] * len(be)
    return Mesh(vertices, tris, be, tags)


def generate_dumbbell(handle_width, h):
    """Two unit-square chambers joined by a thin rectangular handle.

    Chambers are ``[-1.5, -0.5] x [-0.5, 0.5]`` and its mirror image, the
    handle is ``[-0.5, 0.5] x [-w/2, w/2]``.  ``handle_width = 0`` returns
    the disconnected two-chamber limit.
    """
    w = float(handle_width)
    if not (0.0 <= w <= 1.0):
        raise MeshError(f"dumbbell: handle_width={w} must lie in [0, 1]")
    if w == 0.0:
        n = max(2, int(math.ceil(1.0 / h)))
        g = np.linspace(-0.5, 0.5, n + 1)
        return _mesh_from_blocks([(g - 1.0, g), (g + 1.0, g)])
    if h > 0.5 * w:
        raise MeshError(
            f"dumbbell: h={h} exceeds handle_width/2={0.5 * w}, handle needs "
            "two element layers across")
    nh = max(2, int(math.ceil(w / h)))
    yh = np.linspace(-0.5 * w, 0.5 * w, nh + 1)
    if 0.5 - 0.5 * w < 1e-12:
        ya = np.zeros(0)
    else:
        na = max(1, int(math.ceil((0.5 - 0.5 * w) / h)))
        ya = np.linspace(0.5 * w, 0.5, na + 1)[1:]
    ys = np.concatenate([(-ya)[::-1], yh, ya])
    nxc = max(2, int(math.ceil(1.0 / h)))
    xl = np.linspace(-1.5, -0.5, nxc + 1)
    xr = np.linspace(0.5, 1.5, nxc + 1)
    nxh = max(2, int(math.ceil(1.0 / h)))
    xh = np.linspace(-0.5, 0.5, nxh + 1)
    return _mesh_from_blocks([(xl, ys), (xh, yh), (xr, ys)])


def generate_rectangle(h, x0=0.0, x1=1.0, y0=0.0, y1=1.0):
    """Structured right-triangle mesh of an axis-aligned rectangle."""
    if not (x1 > x0 and y1 > y0):
        raise MeshError("rectangle: need x1 > x0 and y1 > y0")
    if h <= 0:
        raise MeshError("rectangle: h must be positive")
    nx = max(1, int(round((x1 - x0) / h)))
    ny = max(1, int(round((y1 - y0) / h)))
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    return _mesh_from_blocks([(xs, ys)])


# ---------------------------------------------------------------------------
# families
# ---------------------------------------------------------------------------

class DomainFamily:
    """A perturbed-domain sequence with a declared limit.

    ``kind`` is one of ``cracked_disk`` (params are crack tip abscissae,
    default ``2**-n``), ``dumbbell`` (handle widths, default ``2**-n``) or
    ``fixed_hole`` (constant hole radius, declared limit the full disk).
    Indices run from 1 to ``n_max``.
    """

    KINDS = ("cracked_disk", "dumbbell", "fixed_hole")

    def __init__(self, kind, h, n_max=6, params=None):
        if kind not in self.KINDS:
            raise MeshError(f"unknown family kind {kind!r}")
        if n_max < 1:
            raise MeshError("n_max must be at least 1")
        self.kind = kind
        self.h = float(h)
        self.n_max = int(n_max)
        if params is None:
            if kind == "fixed_hole":
                params = (0.25,) * self.n_max
            else:
                params = tuple(2.0 ** -n for n in range(1, self.n_max + 1))
        params = tuple(float(p) for p in params)
        if len(params) != self.n_max:
            raise MeshError("need one parameter per family index")
        self.params = params

    def param(self, n):
        return self.params[n - 1]

    def mesh(self, n):
        """Mesh of the n-th perturbed domain, 1-based."""
        p = self.param(n)
        if self.kind == "cracked_disk":
            return generate_cracked_disk(p, self.h)
        if self.kind == "dumbbell":
            return generate_dumbbell(p, self.h)
        return generate_fixed_hole(p, self.h)

    def limit_mesh(self, h=None):
        """Mesh of the declared limit domain."""
        h = self.h if h is None else h
        if self.kind == "cracked_disk":
            return generate_cracked_disk(0.0, h)
        if self.kind == "dumbbell":
            return generate_dumbbell(0.0, h)
        return generate_disk(h)

    def alt_limit_mesh(self, factor=0.75):
        """Independent triangulation of the limit domain (floor calibration)."""
        return self.limit_mesh(h=self.h * factor)

    def __repr__(self):
        return f"DomainFamily({self.kind!r}, h={self.h}, n_max={self.n_max})"


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------

def _fmt(x):
    return format(float(x), ".17g")


def write_mesh(mesh, path):
    """Write a mesh in the ``mesh2d`` line format (bit-exact round trip)."""
    lines = [f"mesh2d {len(mesh.vertices)} {len(mesh.triangles)} "
             f"{len(mesh.boundary_edges)} {len(mesh.seams)}"]
    for x, y in mesh.vertices:
        lines.append(f"v {_fmt(x)} {_fmt(y)}")
    for i, j, k in mesh.triangles:
        lines.append(f"t {i} {j} {k}")
    for (i, j), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
        lines.append(f"b {i} {j} {tag}")
    for p, q in mesh.seams:
        lines.append(f"s {p} {q}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path):
    """Read a ``mesh2d`` file written by :func:`write_mesh`."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise MeshError(f"{path}: empty mesh file")
    head = lines[0].split()
    if len(head) != 5 or head[0] != "mesh2d":
        raise MeshError(f"{path}: expected header 'mesh2d nv nt nb ns'")
    try:
        nv, nt, nb, ns = (int(x) for x in head[1:])
    except ValueError:
        raise MeshError(f"{path}: expected header 'mesh2d nv nt nb ns'") from None
    if min(nv, nt, nb, ns) < 0 or len(lines) < 1 + nv + nt + nb + ns:
        raise MeshError(f"{path}: truncated mesh file")

    row_names = {"v": "vertex", "t": "triangle", "b": "boundary", "s": "seam"}

    def fields(idx, kind, want):
        tok = lines[idx].split()
        if len(tok) != 1 + want or tok[0] != kind:
            raise MeshError(
                f"{path}: expected {row_names[kind]} line at {idx + 1}")
        return tok[1:]

    def badrow(idx, kind):
        raise MeshError(
            f"{path}: expected {row_names[kind]} line at {idx + 1}") from None

    pos = 1
    verts = np.empty((nv, 2))
    for i in range(nv):
        f = fields(pos + i, "v", 2)
        try:
            verts[i] = (float(f[0]), float(f[1]))
        except ValueError:
            badrow(pos + i, "v")
    pos += nv
    tris = np.empty((nt, 3), dtype=np.int64)
    for i in range(nt):
        f = fields(pos + i, "t", 3)
        try:
            tris[i] = (int(f[0]), int(f[1]), int(f[2]))
        except ValueError:
            badrow(pos + i, "t")
    pos += nt
    be = np.empty((nb, 2), dtype=np.int64)
    tags = []
    for i in range(nb):
        f = fields(pos + i, "b", 3)
        try:
            be[i] = (int(f[0]), int(f[1]))
        except ValueError:
            badrow(pos + i, "b")
        tags.append(f[2])
    pos += nb
    seams = np.empty((ns, 2), dtype=np.int64)
    for i in range(ns):
        f = fields(pos + i, "s", 2)
        try:
            seams[i] = (int(f[0]), int(f[1]))
        except ValueError:
            badrow(pos + i, "s")
    return Mesh(verts, tris, be, tags, seams=seams)
