"""Finite element spaces on triangles: P2 velocity, composite P1+P0 pressure.

P2 nodes are the mesh vertices followed by the edge midpoints (edge ``k`` has
node ``n_vertices + k``).  Vector fields interleave components, so component
``c`` of node ``i`` is dof ``2*i + c``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Triangulation

_S15 = np.sqrt(15.0)
_A = (6.0 - _S15) / 21.0
_B = (6.0 + _S15) / 21.0
_WA = (155.0 - _S15) / 2400.0
_WB = (155.0 + _S15) / 2400.0


def quadrature(degree=5):
    """Points ``(Q, 2)`` and weights ``(Q,)`` on the reference triangle (area 1/2)."""
    if degree < 0 or degree > 5:
        raise ValueError(f"unsupported quadrature degree {degree}")
    if degree <= 1:
        return np.array([[1 / 3, 1 / 3]]), np.array([0.5])
    if degree == 2:
        return (np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]]),
                np.full(3, 1 / 6))
    pts = np.array([[1 / 3, 1 / 3],
                    [_A, _A], [1 - 2 * _A, _A], [_A, 1 - 2 * _A],
                    [_B, _B], [1 - 2 * _B, _B], [_B, 1 - 2 * _B]])
    w = np.array([9 / 80, _WA, _WA, _WA, _WB, _WB, _WB])
    return pts, w


def barycentric(ref_pts):
    ref_pts = np.asarray(ref_pts, float)
    return np.c_[1.0 - ref_pts[..., 0] - ref_pts[..., 1], ref_pts[..., 0], ref_pts[..., 1]]


def p2_values(lam):
    """P2 shape functions at barycentric coordinates ``lam`` (..., 3) -> (..., 6)."""
    lam = np.asarray(lam, float)
    l0, l1, l2 = lam[..., 0], lam[..., 1], lam[..., 2]
    return np.stack([l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
                     4 * l1 * l2, 4 * l2 * l0, 4 * l0 * l1], axis=-1)


def p2_gradients(lam, grad_lam):
    """Physical gradients.  ``lam`` (Q, 3) or (T, Q, 3), ``grad_lam`` (T, 3, 2)
    -> (T, Q, 6, 2)."""
    lam = np.asarray(lam, float)
    if lam.ndim == 2:
        lam = np.broadcast_to(lam, (len(grad_lam),) + lam.shape)
    g = grad_lam[:, None, :, :]  # T,1,3,2
    L = lam[..., :, None]  # T,Q,3,1
    out = np.empty(lam.shape[:2] + (6, 2))
    out[:, :, :3] = (4 * L - 1) * g
    for k in range(3):
        j, m = (k + 1) % 3, (k + 2) % 3
        out[:, :, 3 + k] = 4 * (L[:, :, j] * g[:, :, m] + L[:, :, m] * g[:, :, j])
    return out


def grad_barycentric(vertices, triangles):
    """Gradients of the barycentric coordinates (T, 3, 2) and areas (T,)."""
    p = vertices[triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    # rows of the inverse Jacobian give grad(lam1), grad(lam2)
    g1 = np.c_[e2[:, 1], -e2[:, 0]] / det[:, None]
    g2 = np.c_[-e1[:, 1], e1[:, 0]] / det[:, None]
    g0 = -g1 - g2
    return np.stack([g0, g1, g2], axis=1), 0.5 * det


class P2Space:
    """Scalar P2 dof map plus cached element geometry and quadrature data."""

    def __init__(self, tri: Triangulation, degree=5):
        self.tri = tri
        nv = tri.n_vertices
        self.n_nodes = nv + tri.n_edges
        self.cell_dofs = np.c_[tri.triangles, nv + tri.tri_edges]
        self.nodes = np.r_[tri.vertices, tri.edge_midpoints()]
        self.qref, self.qw = quadrature(degree)
        self.lam = barycentric(self.qref)  # Q,3
        self.grad_lam, self.area = grad_barycentric(tri.vertices, tri.triangles)
        self.phi = p2_values(self.lam)  # Q,6
        self.dphi = p2_gradients(self.lam, self.grad_lam)  # T,Q,6,2
        self.wdet = 2.0 * self.area[:, None] * self.qw[None, :]  # T,Q
        p = tri.vertices[tri.triangles]
        self.qpts = np.einsum("qi,tic->tqc", self.lam, p)  # T,Q,2

    @property
    def n_dofs(self):
        return self.n_nodes

    @property
    def vector_dofs(self):
        """Per-element vector dof ids (T, 12), ordered (node, component)."""
        d = self.cell_dofs
        return np.stack([2 * d, 2 * d + 1], axis=-1).reshape(len(d), 12)

    def interpolate(self, f):
        """Nodal interpolation of a callable ``f(points) -> (n,) or (n, 2)``."""
        vals = np.asarray(f(self.nodes), float)
        return vals.reshape(-1) if vals.ndim == 2 else vals

    def evaluate(self, coeffs, tri_ids, lam):
        """Evaluate a scalar (n_nodes,) or interleaved vector field at points
        given by element ids and barycentric coordinates."""
        phi = p2_values(lam)  # P,6
        dofs = self.cell_dofs[tri_ids]  # P,6
        c = np.asarray(coeffs, float)
        if c.size == 2 * self.n_nodes:
            c2 = c.reshape(-1, 2)
            return np.einsum("pi,pic->pc", phi, c2[dofs])
        return np.einsum("pi,pi->p", phi, c[dofs])

    def values_at_quadrature(self, coeffs):
        """Field values at all quadrature points: (T, Q) or (T, Q, 2)."""
        c = np.asarray(coeffs, float)
        if c.size == 2 * self.n_nodes:
            return np.einsum("qi,tic->tqc", self.phi, c.reshape(-1, 2)[self.cell_dofs])
        return np.einsum("qi,ti->tq", self.phi, c[self.cell_dofs])

    def gradients_at_quadrature(self, coeffs):
        """Vector field Jacobian at quadrature points, (T, Q, 2, 2) with
        ``[..., a, b] = d u_a / d x_b``."""
        c = np.asarray(coeffs, float).reshape(-1, 2)[self.cell_dofs]  # T,6,2
        return np.einsum("tqib,tia->tqab", self.dphi, c)


def p1_to_p2(tri: Triangulation, values):
    """Embed a P1 field (scalar (N,) or vector (N, 2)) into P2 by midpoint averaging."""
    v = np.asarray(values, float)
    mid = 0.5 * (v[tri.edges[:, 0]] + v[tri.edges[:, 1]])
    return np.concatenate([v, mid], axis=0)


@dataclass
class CompositePressure:
    """p = sum_i a_i phi_i (P1) + sum_e b_e chi_e (P0)."""

    p1: np.ndarray
    p0: np.ndarray

    @classmethod
    def from_vector(cls, vec, n_vertices):
        vec = np.asarray(vec, float)
        return cls(vec[:n_vertices].copy(), vec[n_vertices:].copy())

    def to_vector(self):
        return np.r_[self.p1, self.p0]

    def evaluate(self, tri: Triangulation, tri_ids, lam):
        a = self.p1[tri.triangles[tri_ids]]
        return np.einsum("pi,pi->p", a, lam) + self.p0[tri_ids]

    def integral(self, tri: Triangulation):
        area = tri.areas()
        return float(area @ (self.p1[tri.triangles].mean(axis=1) + self.p0))

    def mean_zero(self, tri: Triangulation):
        c = self.integral(tri) / float(tri.areas().sum())
        return CompositePressure(self.p1 - c, self.p0.copy())


def redundancy_vector(tri: Triangulation):
    """Coefficient vector (1 on P1, -1 on P0) representing the zero function."""
    return np.r_[np.ones(tri.n_vertices), -np.ones(tri.n_triangles)]


def mean_zero_project(p: CompositePressure, tri: Triangulation) -> CompositePressure:
    return p.mean_zero(tri)


def interpolate_p2(field, target: Triangulation, source=None):
    """P2 nodal interpolation onto ``target``.

    ``field`` is either a callable of points or, with ``source=(tri, space)``
    given, a coefficient vector on the source mesh evaluated by point location.
    """
    space = P2Space(target, degree=1)
    if callable(field):
        return space.interpolate(field)
    from .motion import evaluate_p2_on_points

    src_tri, src_space = source
    return evaluate_p2_on_points(src_tri, src_space, field, space.nodes).reshape(-1)


def interpolate_p0(values, source: Triangulation, target: Triangulation):
    """Piecewise constant transfer by evaluation at the target barycentres."""
    from .motion import locate_points

    ids, _ = locate_points(source, target.barycentres())
    return np.asarray(values)[ids]
