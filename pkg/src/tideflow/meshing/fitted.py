"""Interface-fitted mesh generation on rectangles (optionally with a hole)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..geometry import (DIRICHLET, INTERFACE, SLIP, FittedMesh, MeshError, Phases,
                        Triangulation, build_fitted_topology, points_in_polygon)
from .cdt import CDT

SIDES = ("bottom", "right", "top", "left")


@dataclass(frozen=True)
class DomainSpec:
    """Rectangle ``outer = (x0, y0, x1, y1)``, optional rectangular ``hole``.

    ``markers`` assigns a boundary marker to each outer side; hole edges get
    ``hole_marker``.  With ``graded`` the size field is ``h_char`` within
    ``2 h_char`` of the interface and grows linearly (slope ``grading``) up to
    ``coarsening * h_char``; otherwise it is ``h_char`` everywhere.
    """

    outer: tuple = (0.0, 0.0, 1.0, 1.0)
    h_char: float = 0.1
    hole: tuple | None = None
    markers: dict = field(default_factory=lambda: dict.fromkeys(SIDES, DIRICHLET))
    hole_marker: int = DIRICHLET
    graded: bool = False
    coarsening: float = 4.0
    grading: float = 1.0
    size_tol: float = math.sqrt(2.0)
    max_elements: int = 1_000_000

    def __post_init__(self):
        x0, y0, x1, y1 = self.outer
        if not (x1 > x0 and y1 > y0):
            raise MeshError("outer rectangle is empty")
        if not self.h_char > 0:
            raise MeshError("h_char must be positive")
        if self.hole is not None:
            hx0, hy0, hx1, hy1 = self.hole
            if not (x0 < hx0 < hx1 < x1 and y0 < hy0 < hy1 < y1):
                raise MeshError("hole must lie strictly inside the outer rectangle")
        for s in SIDES:
            if self.markers.get(s) not in (DIRICHLET, SLIP):
                raise MeshError(f"invalid marker for side {s!r}")

    def outer_polygon(self):
        x0, y0, x1, y1 = self.outer
        return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], float)

    def hole_polygon(self):
        if self.hole is None:
            return None
        x0, y0, x1, y1 = self.hole
        return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], float)

    def size_field(self, gamma=None):
        h = float(self.h_char)
        if not self.graded or gamma is None or len(gamma) == 0:
            return lambda x, y: h
        a = np.asarray(gamma, float)
        b = np.roll(a, -1, axis=0)
        d = b - a
        dd = np.einsum("ij,ij->i", d, d)
        hmax = self.coarsening * h
        slope = self.grading

        def size(x, y):
            w = np.array([x, y]) - a
            s = np.clip(np.einsum("ij,ij->i", w, d) / dd, 0.0, 1.0)
            r = w - s[:, None] * d
            dist = math.sqrt(float(np.min(np.einsum("ij,ij->i", r, r))))
            return min(hmax, h + slope * max(0.0, dist - 2.0 * h))

        return size


def _segments_intersect(p, q):
    """Pairwise proper-or-touching intersection of closed polygon p with segments q."""
    a1, a2 = p, np.roll(p, -1, axis=0)
    b1, b2 = q[:, 0], q[:, 1]

    def orient(o, u, v):
        return ((u[..., 0] - o[..., 0]) * (v[..., 1] - o[..., 1])
                - (u[..., 1] - o[..., 1]) * (v[..., 0] - o[..., 0]))

    A1, A2 = a1[:, None], a2[:, None]
    B1, B2 = b1[None], b2[None]
    d1, d2 = orient(A1, A2, B1), orient(A1, A2, B2)
    d3, d4 = orient(B1, B2, A1), orient(B1, B2, A2)
    return (d1 * d2 <= 0) & (d3 * d4 <= 0)


def _point_segment_distance(pts, a, b):
    d = b - a
    dd = np.maximum(np.einsum("ij,ij->i", d, d), 1e-300)
    w = pts[:, None, :] - a[None]
    s = np.clip(np.einsum("pij,ij->pi", w, d) / dd, 0.0, 1.0)
    r = w - s[..., None] * d[None]
    return np.sqrt(np.einsum("pij,pij->pi", r, r))


def validate_interface(spec: DomainSpec, gamma):
    """Raise :class:`MeshError` unless gamma is simple and strictly interior."""
    g = np.asarray(gamma, float)
    n = len(g)
    if n < 3:
        raise MeshError("interface polygon needs at least 3 vertices")
    x0, y0, x1, y1 = spec.outer
    if not (np.all(g[:, 0] > x0) and np.all(g[:, 0] < x1) and np.all(g[:, 1] > y0)
            and np.all(g[:, 1] < y1)):
        raise MeshError("interface intersects the domain boundary")
    hole = spec.hole_polygon()
    if hole is not None:
        segs = np.stack([hole, np.roll(hole, -1, axis=0)], axis=1)
        if _segments_intersect(g, segs).any() or points_in_polygon(g, hole).any():
            raise MeshError("interface intersects the domain boundary")
    # simplicity: non-adjacent segments must stay apart
    scale = max(x1 - x0, y1 - y0)
    a, b = g, np.roll(g, -1, axis=0)
    dist = _point_segment_distance(g, a, b)  # vertex i vs segment j
    idx = np.arange(n)
    adj = (idx[:, None] == idx[None, :]) | (idx[:, None] == (idx[None, :] + 1) % n)
    if np.min(np.where(adj, np.inf, dist)) <= 1e-12 * scale:
        raise MeshError("interface polygon is not simple (near self-intersection)")
    segs = np.stack([a, b], axis=1)
    hit = _segments_intersect(g, segs)
    near = (np.abs(idx[:, None] - idx[None, :]) <= 1) | (np.abs(idx[:, None] - idx[None, :]) == n - 1)
    if np.any(hit & ~near):
        raise MeshError("interface polygon is not simple (self-intersection)")


def _split_side(p, q, size, n_probe=64):
    L = float(np.hypot(*(q - p)))
    s = np.linspace(0.0, 1.0, n_probe)
    hmin = min(size(*(p + t * (q - p))) for t in s)
    m = max(1, int(math.ceil(L / hmin - 1e-9)))
    return [p + (i / m) * (q - p) for i in range(m)]


def _seed_points(spec, gamma, size, fixed_pts, spacing=1.0):
    """Graded Poisson-disk sample of interior points taken from a hex lattice.

    Candidates are accepted greedily (finest local size first) when they keep
    a distance of ``spacing * h(p)`` from every accepted or fixed point and
    half that from the boundary and the interface.
    """
    x0, y0, x1, y1 = spec.outer
    hmin = min(size(x, y) for x, y in fixed_pts)
    s = spacing * hmin
    ny = int((y1 - y0) / (s * math.sqrt(3) / 2)) + 1
    nx = int((x1 - x0) / s) + 1
    j, i = np.mgrid[0:ny + 1, 0:nx + 1]
    cand = np.c_[(x0 + (i + 0.5 * (j % 2)) * s).ravel(),
                 (y0 + j * s * math.sqrt(3) / 2).ravel()]
    h = np.array([size(x, y) for x, y in cand])
    wall = np.minimum.reduce([cand[:, 0] - x0, x1 - cand[:, 0], cand[:, 1] - y0, y1 - cand[:, 1]])
    ok = wall > 0.5 * spacing * h
    hole = spec.hole_polygon()
    if hole is not None:
        hx0, hy0, hx1, hy1 = spec.hole
        dx = np.maximum.reduce([hx0 - cand[:, 0], cand[:, 0] - hx1, np.zeros(len(cand))])
        dy = np.maximum.reduce([hy0 - cand[:, 1], cand[:, 1] - hy1, np.zeros(len(cand))])
        ok &= np.hypot(dx, dy) > 0.5 * spacing * h
    if gamma is not None:
        dg = _point_segment_distance(cand, gamma, np.roll(gamma, -1, axis=0)).min(axis=1)
        ok &= dg > 0.5 * spacing * h
    cand, h = cand[ok], h[ok]
    order = np.lexsort((cand[:, 1], cand[:, 0], h))
    cell = spacing * max(h.max() if len(h) else hmin, hmin)
    grid = {}

    def add(p):
        grid.setdefault((int(p[0] // cell), int(p[1] // cell)), []).append(p)

    for p in fixed_pts:
        add(p)
    out = []
    for k in order:
        p, r = cand[k], 0.95 * spacing * h[k]
        cx, cy = int(p[0] // cell), int(p[1] // cell)
        clear = True
        for gx in (cx - 1, cx, cx + 1):
            for gy in (cy - 1, cy, cy + 1):
                for q in grid.get((gx, gy), ()):
                    if (q[0] - p[0]) ** 2 + (q[1] - p[1]) ** 2 < r * r:
                        clear = False
                        break
                if not clear:
                    break
            if not clear:
                break
        if clear:
            add(p)
            out.append(p)
    return out


def _tri_keys(tv):
    a, b, c = (int(v) for v in tv)
    return [(min(p, q), max(p, q)) for p, q in ((a, b), (b, c), (c, a))]


def _flip_corner_elements(verts, tris, segs):
    """Flip the interior edge of every element with two boundary edges, so no
    element has a single free velocity node (which would leave a local
    pressure mode of the composite P1+P0 element)."""
    tris = np.asarray(tris, dtype=np.int64).copy()
    boundary = {k for k, m in segs.items() if m != INTERFACE}
    owner = {}
    for t, (a, b, c) in enumerate(tris.tolist()):
        for p, q in ((a, b), (b, c), (c, a)):
            owner.setdefault((min(p, q), max(p, q)), []).append(t)

    def area(a, b, c):
        return ((verts[b, 0] - verts[a, 0]) * (verts[c, 1] - verts[a, 1])
                - (verts[b, 1] - verts[a, 1]) * (verts[c, 0] - verts[a, 0]))

    for t in range(len(tris)):
        tv = tris[t].tolist()
        inner = [(tv[i], tv[(i + 1) % 3], tv[(i + 2) % 3]) for i in range(3)
                 if (min(tv[i], tv[(i + 1) % 3]), max(tv[i], tv[(i + 1) % 3])) not in boundary]
        if len(inner) != 1:
            continue
        a, b, c = inner[0]
        key = (min(a, b), max(a, b))
        if key in segs:
            continue
        u = next((w for w in owner[key] if w != t), None)
        if u is None:
            continue
        d = next(v for v in tris[u].tolist() if v != a and v != b)
        if area(c, a, d) <= 0 or area(c, d, b) <= 0:
            continue
        for w in (t, u):
            for e in _tri_keys(tris[w]):
                owner[e].remove(w)
        tris[t] = (c, a, d)
        tris[u] = (c, d, b)
        for w in (t, u):
            for e in _tri_keys(tris[w]):
                owner.setdefault(e, []).append(w)
    return tris


def generate_fitted(spec: DomainSpec, gamma=None):
    """Mesh the domain with ``gamma`` (closed polygon, no repeated end point)
    as constrained edges.  Returns ``(Triangulation, loop)``, where ``loop``
    lists the mesh vertex ids of the gamma vertices in input order."""
    g = None if gamma is None or len(gamma) == 0 else np.asarray(gamma, float)
    if g is not None:
        validate_interface(spec, g)
    size = spec.size_field(g)
    x0, y0, x1, y1 = spec.outer
    cdt = CDT((x0, y0), (x1, y1))
    cdt.fixed = {INTERFACE}

    def add_loop(poly, markers):
        ids = []
        marks = []
        for k in range(len(poly)):
            p, q = poly[k], poly[(k + 1) % len(poly)]
            for pt in _split_side(p, q, size):
                ids.append(cdt.insert(pt[0], pt[1]))
                marks.append(markers[k])
        for k in range(len(ids)):
            cdt.insert_segment(ids[k], ids[(k + 1) % len(ids)], marks[k])

    add_loop(spec.outer_polygon(), [spec.markers[s] for s in SIDES])
    hole = spec.hole_polygon()
    if hole is not None:
        add_loop(hole, [spec.hole_marker] * 4)
    loop_ids = []
    if g is not None:
        loop_ids = [cdt.insert(px, py) for px, py in g]
        if len(set(loop_ids)) != len(loop_ids):
            raise MeshError("interface polygon has coincident vertices")
        for k in range(len(loop_ids)):
            cdt.insert_segment(loop_ids[k], loop_ids[(k + 1) % len(loop_ids)], INTERFACE)
    fixed_pts = [(cdt.x[v], cdt.y[v]) for v in range(cdt.n_super, len(cdt.x))]
    for px, py in _seed_points(spec, g, size, fixed_pts):
        cdt.insert(px, py)
    holes = [] if hole is None else [tuple(hole.mean(axis=0))]
    cdt.remove_outside(holes)
    cdt.refine(size, max_triangles=spec.max_elements, size_tol=spec.size_tol)
    verts, tris, remap, segs = cdt.export()
    tris = _flip_corner_elements(verts, tris, segs)
    bmarks = {k: m for k, m in segs.items() if m in (DIRICHLET, SLIP)}
    tri = Triangulation(verts, tris, bmarks)
    loop = remap[np.asarray(loop_ids, dtype=np.int64)] if loop_ids else np.zeros(0, np.int64)
    if np.any(loop < 0):
        raise MeshError("interface vertex lost during meshing")
    return tri, loop


def fitted_mesh(spec: DomainSpec, gamma, phases: Phases | None = None) -> FittedMesh:
    """:func:`generate_fitted` followed by phase labelling."""
    tri, loop = generate_fitted(spec, gamma)
    return build_fitted_topology(tri, loop, phases)


def remesh_keep_interface(fm: FittedMesh, spec: DomainSpec) -> FittedMesh:
    """New bulk mesh around the unchanged interface polygon of ``fm``."""
    if fm.interface is None:
        tri, _ = generate_fitted(spec, None)
        return build_fitted_topology(tri, [], fm.phases)
    gamma = fm.interface_points()
    tri, loop = generate_fitted(spec, gamma)
    new = build_fitted_topology(tri, loop, fm.phases)
    if new.interface.orientation != fm.interface.orientation:
        raise MeshError("interface orientation changed during remeshing")
    return new
