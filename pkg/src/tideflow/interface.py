"""Piecewise linear finite elements on the interface polygon.

Normals point from the inner phase into the outer phase, so the discrete
curvature of a convex inner region is negative.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fe import p2_values
from .geometry import MeshError

_G3 = np.array([0.5 - np.sqrt(15) / 10, 0.5, 0.5 + np.sqrt(15) / 10])
_W3 = np.array([5 / 18, 8 / 18, 5 / 18])


def polygon_segments(points):
    """Segment vectors, lengths and unit normals of a closed polygon.

    The normal of segment ``q_j -> q_{j+1}`` is the clockwise rotation of its
    tangent, i.e. outward for a counter-clockwise polygon.
    """
    d = np.roll(points, -1, axis=0) - points
    L = np.hypot(d[:, 0], d[:, 1])
    if np.any(L <= 0):
        raise MeshError("zero-length interface segment")
    nu = np.c_[d[:, 1], -d[:, 0]] / L[:, None]
    return d, L, nu


def lumped_inner(v, w, points):
    """Mass-lumped inner product on the closed polygon through ``points``."""
    _, L, _ = polygon_segments(points)
    v = np.asarray(v, float)
    w = np.asarray(w, float)
    vw = v * w if v.ndim == 1 else np.einsum("kc,kc->k", v, w)
    return 0.5 * float(np.sum(L * (vw + np.roll(vw, -1))))


def weighted_normals(points, normals=None):
    """omega_k = sum over the two segments at vertex k of (|sigma| / 2) nu."""
    _, L, nu = polygon_segments(points)
    if normals is not None:
        nu = normals
    seg = 0.5 * L[:, None] * nu
    return seg + np.roll(seg, 1, axis=0)


def stiffness(points):
    """Graph Laplacian with weights 1/|sigma| (K x K)."""
    _, L, _ = polygon_segments(points)
    K = len(points)
    i = np.arange(K)
    j = (i + 1) % K
    w = 1.0 / L
    rows = np.r_[i, j, i, j]
    cols = np.r_[i, j, j, i]
    vals = np.r_[w, w, -w, -w]
    return sp.csr_matrix((vals, (rows, cols)), shape=(K, K))


def discrete_curvature(points, normals=None):
    """kappa_k = -(A X)_k . omega_k / |omega_k|^2 (vertex-block solve)."""
    X = np.asarray(points, float)
    A = stiffness(X)
    AX = np.c_[A @ X[:, 0], A @ X[:, 1]]
    om = weighted_normals(X, normals)
    n2 = np.einsum("kc,kc->k", om, om)
    if np.any(n2 < 1e-28):
        raise MeshError("vanishing weighted normal (cusp vertex)")
    return -np.einsum("kc,kc->k", AX, om) / n2


@dataclass(frozen=True)
class InterfaceBlocks:
    """A (2K x 2K), N (2K x K), N_bulk (2 n_nodes x K), plus geometry."""

    A: sp.csr_matrix
    N: sp.csr_matrix
    N_bulk: sp.csr_matrix
    points: np.ndarray
    omega: np.ndarray


def assemble_interface_blocks(fm, space) -> InterfaceBlocks:
    """Interface blocks for the fitted mesh ``fm`` and its P2 space."""
    curve = fm.interface
    X = fm.interface_points()
    nu = fm.interface_normals()
    _, L, _ = polygon_segments(X)
    K = len(X)
    lap = stiffness(X)
    A = sp.kron(lap, sp.identity(2), format="csr")
    om = weighted_normals(X, nu)
    rows = (2 * np.arange(K)[:, None] + np.arange(2)[None, :]).ravel()
    cols = np.repeat(np.arange(K), 2)
    N = sp.csr_matrix((om.ravel(), (rows, cols)), shape=(2 * K, K))

    # exact coupling with the bulk P2 trace: 3-point Gauss on each segment
    tri = fm.tri
    verts = curve.vertex_ids
    nxt = np.roll(verts, -1)
    owner = tri.edge_tris[curve.edge_ids, 0]
    T = tri.triangles[owner]  # K,3
    ia = np.argmax(T == verts[:, None], axis=1)
    ib = np.argmax(T == nxt[:, None], axis=1)
    lam = np.zeros((K, 3, 3))  # segment, gauss point, barycentric
    kk = np.arange(K)
    for q, s in enumerate(_G3):
        lam[kk, q, ia] = 1.0 - s
        lam[kk, q, ib] = s
    phi = p2_values(lam)  # K,3,6
    chi = np.stack([1.0 - _G3, _G3], axis=1)  # 3 gauss, 2 (start, end)
    # integral over segment j of chi_{start/end} * phi_i
    Iv = np.einsum("q,qe,kqi->kei", _W3, chi, phi) * L[:, None, None]  # K,2,6
    dofs = space.cell_dofs[owner]  # K,6
    rows, cols, vals = [], [], []
    for e, col in ((0, kk), (1, (kk + 1) % K)):
        for c in range(2):
            rows.append((2 * dofs + c).ravel())
            cols.append(np.repeat(col, 6))
            vals.append((Iv[:, e, :] * nu[:, c, None]).ravel())
    Nb = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                       shape=(2 * space.n_nodes, K))
    return InterfaceBlocks(A, N, Nb, X, om)
