"""Bulk mesh smoothing by linear elasticity and cross-mesh transfer of fields."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fe import grad_barycentric, p2_values
from .geometry import FittedMesh, MeshError, Triangulation

BARY_TOL = 1e-12


# -- elasticity smoothing ----------------------------------------------------
def elasticity_matrix(tri: Triangulation):
    """P1 form 2 (D(psi), D(v)) + (div psi, div v), interleaved components."""
    G, area = grad_barycentric(tri.vertices, tri.triangles)
    lap = np.einsum("t,tic,tjc->tij", area, G, G)
    # test (i,b), trial (j,a): G_i[a] G_j[b] + G_j[a] G_i[b]
    cross = np.einsum("t,tia,tjb->tibja", area, G, G) + np.einsum("t,tja,tib->tibja", area, G, G)
    local = cross
    for c in range(2):
        local[:, :, c, :, c] += lap
    T = tri.n_triangles
    local = local.reshape(T, 6, 6)
    d = tri.triangles
    vd = np.stack([2 * d, 2 * d + 1], axis=-1).reshape(T, 6)
    rows = np.broadcast_to(vd[:, :, None], (T, 6, 6)).ravel()
    cols = np.broadcast_to(vd[:, None, :], (T, 6, 6)).ravel()
    n = 2 * tri.n_vertices
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def boundary_normal_constraints(tri: Triangulation):
    """Dofs fixed by psi . n = 0 on the (axis-aligned) domain boundary."""
    bnd = tri.edges[tri.edge_tris[:, 1] < 0]
    d = tri.vertices[bnd[:, 1]] - tri.vertices[bnd[:, 0]]
    L = np.hypot(d[:, 0], d[:, 1])
    vertical = np.abs(d[:, 0]) <= 1e-10 * L
    horizontal = np.abs(d[:, 1]) <= 1e-10 * L
    if not np.all(vertical | horizontal):
        raise MeshError("mesh smoothing requires an axis-aligned domain boundary")
    comp = np.where(vertical, 0, 1)
    dofs = np.unique((2 * bnd + comp[:, None]).ravel())
    return dofs


class Elasticity:
    """Factorised smoothing problem on a fixed mesh (reused across iterations)."""

    def __init__(self, fm: FittedMesh):
        tri = fm.tri
        self.n = 2 * tri.n_vertices
        gam = fm.interface.vertex_ids if fm.interface is not None else np.zeros(0, np.int64)
        self.gamma_dofs = np.stack([2 * gam, 2 * gam + 1], axis=-1).reshape(-1)
        bdofs = boundary_normal_constraints(tri)
        fixed = np.zeros(self.n, dtype=bool)
        fixed[bdofs] = True
        fixed[self.gamma_dofs] = True
        self.fixed = fixed
        self.free = np.flatnonzero(~fixed)
        K = elasticity_matrix(tri)
        self.K_fc = K[self.free][:, self.gamma_dofs]
        self.lu = spla.splu(K[self.free][:, self.free].tocsc()) if len(self.free) else None

    def solve(self, dX):
        """P1 displacement (N, 2) with psi = dX on the interface."""
        psi = np.zeros(self.n)
        dXf = np.asarray(dX, float).reshape(-1)
        psi[self.gamma_dofs] = dXf
        if self.lu is not None and np.any(dXf):
            psi[self.free] = self.lu.solve(-(self.K_fc @ dXf))
        return psi.reshape(-1, 2)


def solve_elasticity(fm: FittedMesh, dX):
    return Elasticity(fm).solve(dX)


def apply_displacement(fm: FittedMesh, psi):
    """Moved mesh and a flag that is True when some element is inverted or flat."""
    moved = fm.moved(fm.tri.vertices + np.asarray(psi, float).reshape(-1, 2))
    return moved, bool(np.any(moved.tri.areas() <= 0))


# -- point location ----------------------------------------------------------
def barycentric_coordinates(tri: Triangulation, tri_ids, points):
    p = tri.vertices[tri.triangles[tri_ids]]  # P,3,2
    a, b, c = p[:, 0], p[:, 1], p[:, 2]
    det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    w = points - a
    l1 = (w[:, 0] * (c[:, 1] - a[:, 1]) - w[:, 1] * (c[:, 0] - a[:, 0])) / det
    l2 = ((b[:, 0] - a[:, 0]) * w[:, 1] - (b[:, 1] - a[:, 1]) * w[:, 0]) / det
    return np.c_[1.0 - l1 - l2, l1, l2]


def locate_linear(tri: Triangulation, point, tol=None):
    """Exhaustive search: element containing ``point`` (largest min barycentric)."""
    point = np.asarray(point, float)
    ids = np.arange(tri.n_triangles)
    lam = barycentric_coordinates(tri, ids, np.broadcast_to(point, (len(ids), 2)))
    score = lam.min(axis=1)
    t = int(np.argmax(score))
    if score[t] >= -BARY_TOL:
        return t
    # tolerate points just outside the mesh (relative to its diameter)
    tol = 1e-10 * tri.diameter() if tol is None else tol
    p = tri.vertices[tri.triangles[t]]
    d = _point_triangle_distance(point, p)
    if d <= tol:
        return t
    # the best barycentric score need not be the nearest element; check all
    dist = np.array([_point_triangle_distance(point, tri.vertices[tri.triangles[k]])
                     for k in np.flatnonzero(score > score[t] - 1.0)])
    k = int(np.argmin(dist))
    if dist[k] <= tol:
        return int(np.flatnonzero(score > score[t] - 1.0)[k])
    raise MeshError(f"point {point.tolist()} lies outside the mesh")


def _point_triangle_distance(p, tv):
    best = np.inf
    for i in range(3):
        a, b = tv[i], tv[(i + 1) % 3]
        d = b - a
        s = np.clip(np.dot(p - a, d) / np.dot(d, d), 0.0, 1.0)
        best = min(best, float(np.hypot(*(p - a - s * d))))
    return best


class Locator:
    """Guided walk on a fixed mesh: step to the neighbour opposite the vertex
    farthest from the target. At boundary faces or revisited elements step
    across an edge the target lies beyond instead, and fall back to a linear
    scan only when no such step is possible."""

    def __init__(self, tri: Triangulation):
        self.tri = tri
        self.xy = tri.vertices.tolist()
        self.tv = tri.triangles.tolist()
        self.nb = tri.neighbors.tolist()
        self.fallbacks = 0

    def walk(self, start, px, py):
        xy, tv, nb = self.xy, self.tv, self.nb
        t = start
        seen = set()
        while True:
            a, b, c = tv[t]
            ax, ay = xy[a]
            bx, by = xy[b]
            cx, cy = xy[c]
            det = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
            l1 = ((px - ax) * (cy - ay) - (py - ay) * (cx - ax)) / det
            l2 = ((bx - ax) * (py - ay) - (by - ay) * (px - ax)) / det
            l0 = 1.0 - l1 - l2
            if l0 >= -BARY_TOL and l1 >= -BARY_TOL and l2 >= -BARY_TOL:
                return t, (l0, l1, l2)
            seen.add(t)
            d0 = (ax - px) ** 2 + (ay - py) ** 2
            d1 = (bx - px) ** 2 + (by - py) ** 2
            d2 = (cx - px) ** 2 + (cy - py) ** 2
            k = 0 if d0 >= d1 and d0 >= d2 else (1 if d1 >= d2 else 2)
            n = nb[t][k]
            if n < 0 or n in seen:
                # cross the edge the point lies beyond, most negative first
                n = -1
                for _, j in sorted(((l0, 0), (l1, 1), (l2, 2))):
                    m = nb[t][j]
                    if (l0, l1, l2)[j] < -BARY_TOL and m >= 0 and m not in seen:
                        n = m
                        break
            if n < 0:
                self.fallbacks += 1
                t = locate_linear(self.tri, (px, py))
                lam = barycentric_coordinates(self.tri, np.array([t]), np.array([[px, py]]))[0]
                return t, tuple(lam)
            t = n


def locate_walk(tri: Triangulation, start, point):
    """Element containing ``point``, searching from element ``start``."""
    t, _ = Locator(tri).walk(int(start), float(point[0]), float(point[1]))
    return t


def locate_points(tri: Triangulation, points, start=0):
    """Locate many points, each walk seeded by the previous hit."""
    loc = Locator(tri)
    pts = np.asarray(points, float).tolist()
    ids = np.empty(len(pts), dtype=np.int64)
    lam = np.empty((len(pts), 3))
    t = start
    for k, (x, y) in enumerate(pts):
        t, l = loc.walk(t, x, y)
        ids[k] = t
        lam[k] = l
    return ids, lam


# -- lattice path and transfer -------------------------------------------------
@dataclass(frozen=True)
class LatticePath:
    spacing: float
    order: np.ndarray  # element ids in traversal order
    buckets: tuple  # element id arrays per visited lattice point, in path order


def build_lattice_path(tri: Triangulation, spacing):
    """Bucket elements by the lattice point nearest their barycentre and
    traverse lattice rows alternately left-to-right and right-to-left."""
    if not spacing > 0:
        raise ValueError("lattice spacing must be positive")
    bc = tri.barycentres()
    lo = tri.vertices.min(axis=0)
    ij = np.rint((bc - lo) / spacing).astype(np.int64)
    i, j = ij[:, 0], ij[:, 1]
    # snake order: odd rows reversed
    key_i = np.where(j % 2 == 0, i, -i)
    order = np.lexsort((np.arange(len(bc)), key_i, j))
    cells = np.c_[j[order], i[order]]
    split = np.flatnonzero(np.any(cells[1:] != cells[:-1], axis=1)) + 1
    buckets = tuple(np.split(order, split))
    return LatticePath(float(spacing), order, buckets)


def transfer_velocity(U_old, old_tri: Triangulation, new_tri: Triangulation, path=None,
                      spacing=None):
    """P2 nodal values on ``new_tri`` of the P2 field ``U_old`` on ``old_tri``
    (interleaved vector or scalar), visiting new elements along the lattice
    path with walks seeded by the previous hit."""
    if path is None:
        spacing = spacing or float(np.sqrt(new_tri.areas().mean() * 2.0))
        path = build_lattice_path(new_tri, spacing)
    nv_new = new_tri.n_vertices
    n_new = nv_new + new_tri.n_edges
    nodes = np.r_[new_tri.vertices, new_tri.edge_midpoints()]
    cell_dofs = np.c_[new_tri.triangles, nv_new + new_tri.tri_edges]
    seq = []
    done = np.zeros(n_new, dtype=bool)
    for t in path.order:
        for nd in cell_dofs[t]:
            if not done[nd]:
                done[nd] = True
                seq.append(nd)
    seq = np.asarray(seq, dtype=np.int64)
    start = 0
    ids, lam = locate_points(old_tri, nodes[seq], start)
    old_dofs = np.c_[old_tri.triangles, old_tri.n_vertices + old_tri.tri_edges]
    phi = p2_values(lam)
    U = np.asarray(U_old, float)
    n_old = old_tri.n_vertices + old_tri.n_edges
    if U.size == 2 * n_old:
        vals = np.einsum("pi,pic->pc", phi, U.reshape(-1, 2)[old_dofs[ids]])
        out = np.empty((n_new, 2))
        out[seq] = vals
        return out.reshape(-1)
    out = np.empty(n_new)
    out[seq] = np.einsum("pi,pi->p", phi, U[old_dofs[ids]])
    return out


def evaluate_p2_on_points(tri: Triangulation, space, coeffs, points):
    ids, lam = locate_points(tri, points)
    return space.evaluate(coeffs, ids, lam)
