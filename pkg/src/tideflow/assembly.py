"""Bulk finite element matrices and right-hand sides of the coupled system.

Unknown ordering: velocity (interleaved P2, ``2 * n_nodes``), pressure
(P1 coefficients then P0 coefficients), curvature (one per interface
vertex), interface displacement (interleaved, ``2 * K``).  The coupled system
reads::

    [ B      C  -gamma Nb    0       ] [U ]   [ c          ]
    [ C^T    0   0           0       ] [P ] = [ beta       ]
    [ Nb^T   0   0          -N^T/tau ] [k ]   [ 0          ]
    [ 0      0   N           A       ] [dX]   [ -A X       ]
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .fe import P2Space
from .geometry import DIRICHLET, SLIP, MeshError

VELOCITY_MODES = ("explicit", "picard", "antisymmetric", "ale")


def _scatter(dofs_r, dofs_c, local, shape):
    T, nr = dofs_r.shape
    nc = dofs_c.shape[1]
    rows = np.broadcast_to(dofs_r[:, :, None], (T, nr, nc)).ravel()
    cols = np.broadcast_to(dofs_c[:, None, :], (T, nr, nc)).ravel()
    m = sp.coo_matrix((local.ravel(), (rows, cols)), shape=shape).tocsr()
    m.sum_duplicates()
    return m


def _expand(scalar):
    """Scalar n x n operator acting componentwise on interleaved vectors."""
    return sp.kron(scalar, sp.identity(2), format="csr")


def mass_matrix(space: P2Space, rho):
    """Scalar weighted mass matrix (rho per element)."""
    local = np.einsum("tq,qi,qj->tij", space.wdet * rho[:, None], space.phi, space.phi)
    n = space.n_nodes
    return _scatter(space.cell_dofs, space.cell_dofs, local, (n, n))


def viscous_matrix(space: P2Space, mu):
    """2 (mu D(u), D(v)) on interleaved P2 vectors."""
    G = space.dphi  # T,Q,6,2
    w = space.wdet * mu[:, None]
    lap = np.einsum("tq,tqic,tqjc->tij", w, G, G)
    cross = np.einsum("tq,tqia,tqjb->tibja", w, G, G)  # test (i,b), trial (j,a)
    T = len(G)
    local = cross.copy()
    for c in range(2):
        local[:, :, c, :, c] += lap
    local = local.reshape(T, 12, 12)
    vd = space.vector_dofs
    n = 2 * space.n_nodes
    return _scatter(vd, vd, local, (n, n))


def convection_matrix(space: P2Space, rho, w_q, antisymmetric=False):
    """Scalar convection matrix for transport field ``w_q`` (T, Q, 2):
    ``int rho phi_i (w . grad phi_j)``, or its skew-symmetric part."""
    adv = np.einsum("tqc,tqjc->tqj", w_q, space.dphi)  # w . grad phi_j
    wr = space.wdet * rho[:, None]
    local = np.einsum("tq,qi,tqj->tij", wr, space.phi, adv)
    if antisymmetric:
        local = 0.5 * (local - local.transpose(0, 2, 1))
    n = space.n_nodes
    return _scatter(space.cell_dofs, space.cell_dofs, local, (n, n))


def pressure_matrix(space: P2Space):
    """C with entries -int q div(xi) for q in P1 (vertex hats) then P0."""
    tri = space.tri
    N, T = tri.n_vertices, tri.n_triangles
    G = space.dphi  # T,Q,6,2
    c1 = -np.einsum("tq,qk,tqib->tibk", space.wdet, space.lam, G).reshape(T, 12, 3)
    c0 = -np.einsum("tq,tqib->tib", space.wdet, G).reshape(T, 12, 1)
    local = np.concatenate([c1, c0], axis=2)
    pd = np.c_[tri.triangles, N + np.arange(T)]
    return _scatter(space.vector_dofs, pd, local, (2 * space.n_nodes, N + T))


def load_vector(space: P2Space, f_q):
    """int f . xi for f given at quadrature points (T, Q, 2)."""
    loc = np.einsum("tq,qi,tqc->tic", space.wdet, space.phi, f_q).reshape(len(f_q), 12)
    out = np.zeros(2 * space.n_nodes)
    np.add.at(out, space.vector_dofs.ravel(), loc.ravel())
    return out


def pressure_test_integrals(space: P2Space, f_q=None):
    """(f, q) for all pressure basis functions q; f = 1 when not given."""
    tri = space.tri
    f = np.ones(space.wdet.shape) if f_q is None else f_q
    wf = space.wdet * f
    p1 = np.zeros(tri.n_vertices)
    np.add.at(p1, tri.triangles.ravel(), np.einsum("tq,qk->tk", wf, space.lam).ravel())
    return np.r_[p1, wf.sum(axis=1)]


def boundary_edges_oriented(tri):
    """Boundary edges as (a, b, edge id) with the domain on the left of a -> b."""
    bnd = np.flatnonzero(tri.edge_tris[:, 1] < 0)
    t = tri.edge_tris[bnd, 0]
    loc = np.argmax(tri.tri_edges[t] == bnd[:, None], axis=1)
    a = tri.triangles[t, (loc + 1) % 3]
    b = tri.triangles[t, (loc + 2) % 3]
    return a, b, bnd


def dirichlet_flux(space: P2Space, g_nodes):
    """int over the Dirichlet boundary of (I_2 g) . n (Simpson, exact for P2)."""
    tri = space.tri
    a, b, e = boundary_edges_oriented(tri)
    keep = tri.edge_markers[e] == DIRICHLET
    a, b, e = a[keep], b[keep], e[keep]
    g = np.asarray(g_nodes).reshape(-1, 2)
    d = tri.vertices[b] - tri.vertices[a]
    n_len = np.c_[d[:, 1], -d[:, 0]]  # outward normal scaled by length
    gm = (g[a] + 4.0 * g[tri.n_vertices + e] + g[b]) / 6.0
    return float(np.einsum("kc,kc->", gm, n_len))


def continuity_rhs(space: P2Space, flux, fdiv_q=None):
    """Right-hand side of (div U, q) = (f_div, q - mean q) + (q, 1)/|Omega| flux."""
    ones = pressure_test_integrals(space)
    vol = float(space.area.sum())
    out = ones * (flux / vol)
    if fdiv_q is not None:
        fq = pressure_test_integrals(space, fdiv_q)
        out += fq - ones * (float(np.sum(space.wdet * fdiv_q)) / vol)
    return out


@dataclass
class Constraints:
    """Prescribed velocity dofs (Dirichlet values and zero normal components)."""

    dofs: np.ndarray
    values: np.ndarray
    dirichlet_nodes: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))


def velocity_constraints(space: P2Space, g_nodes=None):
    """Dirichlet nodes on marker-11 edges take ``g_nodes``; on marker-12 edges
    the normal component vanishes.  Nodes on both kinds are Dirichlet."""
    tri = space.tri
    nv = tri.n_vertices
    a, b, e = boundary_edges_oriented(tri)
    mk = tri.edge_markers[e]
    nodes = np.c_[a, b, nv + e]
    dnodes = np.unique(nodes[mk == DIRICHLET])
    fixed = {}
    g = np.zeros((space.n_nodes, 2)) if g_nodes is None else np.asarray(g_nodes).reshape(-1, 2)
    for nd in dnodes:
        fixed[2 * nd] = g[nd, 0]
        fixed[2 * nd + 1] = g[nd, 1]
    slip = np.flatnonzero(mk == SLIP)
    if len(slip):
        d = tri.vertices[b[slip]] - tri.vertices[a[slip]]
        L = np.hypot(d[:, 0], d[:, 1])
        vertical = np.abs(d[:, 0]) <= 1e-10 * L
        horizontal = np.abs(d[:, 1]) <= 1e-10 * L
        if not np.all(vertical | horizontal):
            raise MeshError("slip boundary edges must be axis-aligned")
        comp = np.where(vertical, 0, 1)
        for k, c in zip(slip, comp):
            for nd in nodes[k]:
                if 2 * nd + c not in fixed:
                    fixed[2 * nd + c] = 0.0
    dofs = np.array(sorted(fixed), dtype=np.int64)
    vals = np.array([fixed[k] for k in dofs], float)
    return Constraints(dofs, vals, dnodes)


@dataclass
class BlockSystem:
    """All blocks and right-hand sides of one linear solve."""

    B: sp.csr_matrix
    C: sp.csr_matrix
    Nb: sp.csr_matrix
    N: sp.csr_matrix
    A: sp.csr_matrix
    c: np.ndarray
    beta: np.ndarray
    X: np.ndarray  # interface vertex positions, (K, 2)
    constraints: Constraints
    tau: float
    gamma: float
    n_vertices: int

    @property
    def n_velocity(self):
        return self.B.shape[0]

    @property
    def n_pressure(self):
        return self.C.shape[1]

    @property
    def n_interface(self):
        return self.N.shape[1]

    def monolithic(self):
        """Dense-assemblable sparse matrix and rhs of the full system (no constraints)."""
        nk = self.n_interface
        np_ = self.n_pressure
        tau, gam = self.tau, self.gamma
        M = sp.bmat([
            [self.B, self.C, -gam * self.Nb, None],
            [self.C.T, sp.csr_matrix((np_, np_)), None, None],
            [self.Nb.T, None, sp.csr_matrix((nk, nk)), -self.N.T / tau],
            [None, None, self.N, self.A],
        ], format="csr")
        Xf = self.X.reshape(-1)
        rhs = np.r_[self.c, self.beta, np.zeros(nk), -(self.A @ Xf)]
        return M, rhs


def velocity_block(space, rho, mu, tau, mode, w_q=None, rho_prev=None, mass_space=None):
    """Velocity block ``B`` and the matrix applied to the old velocity on the rhs.

    ``explicit``/``picard``: rho mass / tau + viscous + convection by ``w_q``.
    ``antisymmetric``: time term ((rho_prev + rho)/2 U - rho_prev U_old) / tau
    with the skew convection form.  ``ale``: mass on ``mass_space`` (the
    displaced mesh), everything else on ``space``.
    """
    if not tau > 0:
        raise ValueError("time step must be positive")
    if mode not in VELOCITY_MODES:
        raise ValueError(f"unknown velocity mode {mode!r}")
    visc = viscous_matrix(space, mu)
    if mode == "antisymmetric":
        rp = rho if rho_prev is None else rho_prev
        M_new = mass_matrix(space, 0.5 * (rp + rho))
        M_old = mass_matrix(space, rp)
    else:
        ms = mass_space if (mode == "ale" and mass_space is not None) else space
        M_new = M_old = mass_matrix(ms, rho)
    B = _expand(M_new / tau) + visc
    if w_q is not None:
        conv = convection_matrix(space, rho, w_q, antisymmetric=(mode == "antisymmetric"))
        B = B + _expand(conv)
    return B.tocsr(), _expand(M_old / tau).tocsr()
