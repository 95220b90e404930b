"""Bulk triangulations with an embedded (fitted) interface polygon.

The interface is a closed polygon whose segments are edges of the bulk mesh,
so every triangle lies entirely inside one phase.  Phase ``+1`` is the outer
phase (touching the outer boundary), ``-1`` the enclosed one.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

# boundary / physical tags, shared with the MSH reader and writer
DIRICHLET = 11
SLIP = 12
INTERFACE = 20
PLUS = 1
MINUS = -1

GEOM_TOL = 1e-12


class MeshError(ValueError):
    """Raised for topologically or geometrically invalid meshes."""


def signed_areas(vertices, triangles):
    p = vertices[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


class Triangulation:
    """Triangle mesh with edge numbering, adjacency and boundary markers.

    Local edge ``i`` of a triangle is the edge opposite its vertex ``i``,
    i.e. ``(tri[(i+1)%3], tri[(i+2)%3])``.  ``neighbors[t, i]`` is the triangle
    across that edge, or -1 on the boundary.

    ``boundary_markers`` maps sorted vertex pairs of boundary edges to
    :data:`DIRICHLET` or :data:`SLIP`; unlisted boundary edges default to
    Dirichlet.
    """

    def __init__(self, vertices, triangles, boundary_markers=None, *, validate=True,
                 _topology=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        if _topology is not None:
            (self.edges, self.tri_edges, self.neighbors, self.edge_markers,
             self.edge_tris) = _topology
        else:
            self._build_topology(boundary_markers or {})
        if validate:
            self.check()

    def _build_topology(self, markers):
        tris = self.triangles
        nt = len(tris)
        loc = np.array([[1, 2], [2, 0], [0, 1]])
        half = tris[:, loc].reshape(-1, 2)
        key = np.sort(half, axis=1)
        edges, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        inv = inv.ravel()
        if np.any(counts > 2):
            raise MeshError("non-manifold mesh: an edge is shared by more than 2 triangles")
        self.edges = edges
        self.tri_edges = inv.reshape(nt, 3)
        # two incident triangles per edge (second is -1 on the boundary)
        order = np.argsort(inv, kind="stable")
        edge_tris = -np.ones((len(edges), 2), dtype=np.int64)
        sorted_inv = inv[order]
        first = np.r_[True, sorted_inv[1:] != sorted_inv[:-1]]
        edge_tris[sorted_inv[first], 0] = order[first] // 3
        edge_tris[sorted_inv[~first], 1] = order[~first] // 3
        self.edge_tris = edge_tris
        owner = np.repeat(np.arange(nt), 3)
        other = np.where(edge_tris[inv, 0] == owner, edge_tris[inv, 1], edge_tris[inv, 0])
        self.neighbors = other.reshape(nt, 3)
        em = np.zeros(len(edges), dtype=np.int64)
        bnd = edge_tris[:, 1] < 0
        em[bnd] = DIRICHLET
        if markers:
            lookup = {tuple(e): i for i, e in enumerate(map(tuple, edges))}
            for (a, b), m in markers.items():
                k = lookup.get((min(a, b), max(a, b)))
                if k is None or not bnd[k]:
                    raise MeshError(f"marker given for non-boundary edge {(a, b)}")
                if m not in (DIRICHLET, SLIP):
                    raise MeshError(f"unknown boundary marker {m}")
                em[k] = m
        self.edge_markers = em

    # -- derived quantities -------------------------------------------------
    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def boundary_edges(self):
        return np.flatnonzero(self.edge_tris[:, 1] < 0)

    def areas(self):
        return signed_areas(self.vertices, self.triangles)

    def barycentres(self):
        return self.vertices[self.triangles].mean(axis=1)

    def diameter(self):
        lo, hi = self.vertices.min(axis=0), self.vertices.max(axis=0)
        return float(np.hypot(*(hi - lo)))

    def edge_midpoints(self):
        return 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])

    def boundary_markers(self):
        """Dict of sorted boundary vertex pairs -> marker."""
        return {tuple(map(int, self.edges[k])): int(self.edge_markers[k])
                for k in self.boundary_edges}

    def check(self):
        a = self.areas()
        if np.any(a <= 0):
            raise MeshError(f"{int(np.sum(a <= 0))} triangles with non-positive signed area")

    def moved(self, vertices):
        """Same connectivity with new vertex coordinates (no validation)."""
        return Triangulation(vertices, self.triangles, validate=False,
                             _topology=(self.edges, self.tri_edges, self.neighbors,
                                        self.edge_markers, self.edge_tris))


@dataclass(frozen=True)
class Phases:
    rho_plus: float = 1.0
    rho_minus: float = 1.0
    mu_plus: float = 1.0
    mu_minus: float = 1.0


@dataclass(frozen=True)
class InterfaceCurve:
    """Closed interface polygon, stored as indices into the bulk vertices.

    Segment ``j`` joins ``vertex_ids[j]`` and ``vertex_ids[j+1]`` (cyclic) and
    is the bulk edge ``edge_ids[j]``.  ``orientation`` is +1 when the unit
    normal into the outer phase is the clockwise rotation of the tangent.
    """
    vertex_ids: np.ndarray
    edge_ids: np.ndarray
    orientation: int

    @property
    def n(self):
        return len(self.vertex_ids)

    def points(self, vertices):
        return vertices[self.vertex_ids]

    def segment_vectors(self, vertices):
        q = vertices[self.vertex_ids]
        return np.roll(q, -1, axis=0) - q

    def lengths(self, vertices):
        return np.hypot(*self.segment_vectors(vertices).T)

    def normals(self, vertices):
        d = self.segment_vectors(vertices)
        ln = np.hypot(d[:, 0], d[:, 1])
        return self.orientation * np.c_[d[:, 1], -d[:, 0]] / ln[:, None]


@dataclass(frozen=True)
class FittedMesh:
    tri: Triangulation
    interface: InterfaceCurve | None
    labels: np.ndarray
    phases: Phases = field(default_factory=Phases)

    @property
    def rho(self):
        p = self.phases
        return np.where(self.labels == PLUS, p.rho_plus, p.rho_minus).astype(float)

    @property
    def mu(self):
        p = self.phases
        return np.where(self.labels == PLUS, p.mu_plus, p.mu_minus).astype(float)

    @property
    def vertices(self):
        return self.tri.vertices

    def interface_points(self):
        return self.interface.points(self.tri.vertices)

    def interface_normals(self):
        return self.interface.normals(self.tri.vertices)

    def moved(self, vertices):
        """Displace vertices, keeping connectivity, labels and orientation."""
        return FittedMesh(self.tri.moved(vertices), self.interface, self.labels, self.phases)

    def with_phases(self, phases):
        return FittedMesh(self.tri, self.interface, self.labels, phases)


def _edge_lookup(tri):
    return {(int(a), int(b)): k for k, (a, b) in enumerate(tri.edges)}


def build_fitted_topology(tri, loop, phases=None):
    """Attach the interface polygon ``loop`` (vertex ids) to ``tri``.

    Phase labels come from a flood fill that does not cross the loop, started
    from the triangle at the leftmost-lowest vertex (which lies on the outer
    boundary and is therefore labelled ``+``).
    """
    phases = phases or Phases()
    loop = np.asarray(loop, dtype=np.int64)
    if loop.size == 0:
        return FittedMesh(tri, None, np.full(tri.n_triangles, PLUS, dtype=np.int64), phases)
    if len(loop) < 3:
        raise MeshError("interface loop needs at least 3 vertices")
    if loop[0] == loop[-1]:
        loop = loop[:-1]
    if len(np.unique(loop)) != len(loop):
        raise MeshError("interface loop is not simple (repeated vertex)")
    lookup = _edge_lookup(tri)
    nxt = np.roll(loop, -1)
    edge_ids = np.empty(len(loop), dtype=np.int64)
    for j, (a, b) in enumerate(zip(loop, nxt)):
        k = lookup.get((min(a, b), max(a, b)))
        if k is None:
            raise MeshError(f"interface is not fitted: ({a}, {b}) is not a mesh edge")
        if tri.edge_tris[k, 1] < 0:
            raise MeshError(f"interface segment ({a}, {b}) lies on the domain boundary")
        edge_ids[j] = k
    seg = tri.vertices[nxt] - tri.vertices[loop]
    if np.any(np.hypot(seg[:, 0], seg[:, 1]) <= GEOM_TOL * tri.diameter()):
        raise MeshError("degenerate (zero-length) interface segment")

    cut = np.zeros(tri.n_edges, dtype=bool)
    cut[edge_ids] = True
    et = tri.edge_tris
    keep = (et[:, 1] >= 0) & ~cut
    a, b = et[keep, 0], et[keep, 1]
    g = coo_matrix((np.ones(len(a)), (a, b)), shape=(tri.n_triangles,) * 2)
    ncomp, comp = connected_components(g, directed=False)
    if ncomp < 2:
        raise MeshError("interface loop does not separate the domain")
    v0 = np.lexsort((tri.vertices[:, 1], tri.vertices[:, 0]))[0]
    t0 = np.flatnonzero(np.any(tri.triangles == v0, axis=1))[0]
    labels = np.where(comp == comp[t0], PLUS, MINUS).astype(np.int64)

    side_plus = np.where(labels[et[edge_ids, 0]] == PLUS, et[edge_ids, 0], et[edge_ids, 1])
    side_minus = np.where(labels[et[edge_ids, 0]] == PLUS, et[edge_ids, 1], et[edge_ids, 0])
    if np.any(labels[side_plus] != PLUS) or np.any(labels[side_minus] != MINUS):
        raise MeshError("interface segment does not separate the two phases")
    mid = 0.5 * (tri.vertices[loop] + tri.vertices[nxt])
    cand = np.c_[seg[:, 1], -seg[:, 0]]
    side = np.einsum("ij,ij->i", cand, tri.barycentres()[side_plus] - mid)
    if np.all(side > 0):
        orient = 1
    elif np.all(side < 0):
        orient = -1
    else:
        raise MeshError("inconsistent interface orientation (self-intersecting loop?)")
    return FittedMesh(tri, InterfaceCurve(loop, edge_ids, orient), labels, phases)


def corner_angles(vertices, triangles):
    """All corner angles in degrees, shape (T, 3); zero for degenerate corners."""
    p = vertices[triangles]
    out = np.empty(triangles.shape)
    for i in range(3):
        u = p[:, (i + 1) % 3] - p[:, i]
        v = p[:, (i + 2) % 3] - p[:, i]
        cross = np.abs(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])
        dot = np.einsum("ij,ij->i", u, v)
        out[:, i] = np.degrees(np.arctan2(cross, dot))
    return out


def min_angle(tri):
    """Smallest corner angle of the mesh in degrees."""
    if tri.n_triangles == 0:
        return 0.0
    return float(corner_angles(tri.vertices, tri.triangles).min())


def needs_remesh(tri, c_a=20.0):
    """Angle criterion; inverted elements always require a remesh."""
    if np.any(tri.areas() <= 0):
        return True
    return min_angle(tri) <= c_a


def inner_measures(fm):
    """(area of the enclosed phase, interface length)."""
    if fm.interface is None:
        return 0.0, 0.0
    area = float(fm.tri.areas()[fm.labels == MINUS].sum())
    return area, float(fm.interface.lengths(fm.tri.vertices).sum())


def polygon_area(points):
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def points_in_polygon(points, poly):
    """Even-odd rule; points exactly on the polygon are unspecified."""
    points = np.atleast_2d(points)
    x, y = points[:, 0][:, None], points[:, 1][:, None]
    a = poly[None, :, :]
    b = np.roll(poly, -1, axis=0)[None, :, :]
    ay, by = a[..., 1], b[..., 1]
    crosses = (ay > y) != (by > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = a[..., 0] + (y - ay) * (b[..., 0] - a[..., 0]) / (by - ay)
    return np.count_nonzero(crosses & (x < xint), axis=1) % 2 == 1
