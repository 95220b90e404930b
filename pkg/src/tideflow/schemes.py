"""Time steppers: explicit and Picard-implicit convection, the energy-stable
skew-symmetric variant, and the arbitrary Lagrangian-Eulerian scheme."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .assembly import (BlockSystem, continuity_rhs, dirichlet_flux, load_vector, pressure_matrix,
                       velocity_block, velocity_constraints)
from .fe import CompositePressure, P2Space, interpolate_p0, p1_to_p2
from .geometry import FittedMesh, MeshError, needs_remesh
from .interface import assemble_interface_blocks
from .meshing import fitted_mesh, remesh_keep_interface
from .motion import Elasticity, apply_displacement, transfer_velocity
from .problems import Problem, n_steps
from .solver import GmresSettings, SolverError, solve_step

log = logging.getLogger(__name__)

SCHEMES = ("aex", "aim", "b", "ale")


@dataclass(frozen=True)
class SchemeConfig:
    scheme: str = "aex"
    tau: float = 1e-2
    T: float = 1.0
    eps_f: float = 1e-8
    gmres: GmresSettings = GmresSettings()
    c_a: float = 20.0
    lattice_factor: float = 1.0
    max_fixed_point: int = 50
    check_fitted: bool = True

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not self.T >= 0:
            raise ValueError("T must be non-negative")
        if not self.eps_f > 0:
            raise ValueError("eps_f must be positive")
        if not 0 < self.c_a < 60:
            raise ValueError("remesh angle must lie in (0, 60) degrees")


@dataclass
class SchemeState:
    """Discrete solution at t_m.

    ``fm`` carries the interface at t_m.  ``U`` lives on ``U_mesh`` and ``P``
    on ``P_mesh``: for the Eulerian schemes both are the mesh of the previous
    step (before it was moved).  For the ALE scheme the nodal values of ``U``
    are carried by ``fm``, while ``U_solved`` holds the same field on the mesh
    the step was solved on (they differ only after a remesh).
    """

    fm: FittedMesh
    U: np.ndarray
    U_mesh: FittedMesh
    P: np.ndarray
    P_mesh: FittedMesh
    kappa: np.ndarray
    m: int = 0
    t: float = 0.0
    n_remesh: int = 0
    rho_prev: np.ndarray | None = None
    rho_prev_mesh: FittedMesh | None = None
    U_solved: np.ndarray | None = None

    def solved_velocity(self):
        """Velocity coefficients on ``P_mesh``, the mesh the last step was solved on."""
        return self.U if self.U_solved is None else self.U_solved

    def pressure(self):
        return CompositePressure.from_vector(self.P, self.P_mesh.tri.n_vertices)


@dataclass
class StepInfo:
    m: int
    t: float
    gmres_iterations: int
    fixed_point_iterations: int
    remeshed: bool
    seconds: float


def fitted_invariant(fm: FittedMesh):
    """Every interface segment is a mesh edge joining consecutive loop vertices."""
    if fm.interface is None:
        return True
    e = fm.tri.edges[fm.interface.edge_ids]
    v = fm.interface.vertex_ids
    w = np.roll(v, -1)
    pair = np.sort(np.c_[v, w], axis=1)
    return bool(np.array_equal(np.sort(e, axis=1), pair))


def initial_state(problem: Problem, fm: FittedMesh | None = None) -> SchemeState:
    if fm is None:
        fm = fitted_mesh(problem.domain, problem.gamma0, problem.phases)
    space = P2Space(fm.tri, degree=1)
    U = space.interpolate(problem.u0) if problem.u0 is not None else np.zeros(2 * space.n_nodes)
    P = np.zeros(fm.tri.n_vertices + fm.tri.n_triangles)
    return SchemeState(fm=fm, U=U, U_mesh=fm, P=P, P_mesh=fm,
                       kappa=np.zeros(fm.interface.n if fm.interface is not None else 0),
                       rho_prev=fm.rho, rho_prev_mesh=fm)


def _eval(f, pts, t):
    return None if f is None else np.asarray(f(pts, t), float)


def _forcing(problem, space, rho, t):
    q = space.qpts
    f = np.zeros(q.shape)
    if problem.f1 is not None:
        f += rho[:, None, None] * _eval(problem.f1, q, t)
    if problem.f2 is not None:
        f += _eval(problem.f2, q, t)
    return f


def _fdiv(problem, space, t):
    if problem.fdiv is None:
        return None
    return _eval(problem.fdiv, space.qpts, t)


def _g_nodes(problem, nodes, t):
    if problem.g is None:
        return np.zeros_like(nodes)
    return _eval(problem.g, nodes, t)


class _Step:
    """Shared assembly for one time step on a fixed fitted mesh."""

    def __init__(self, problem: Problem, cfg: SchemeConfig, fm: FittedMesh, t_new: float):
        self.problem, self.cfg, self.fm, self.t = problem, cfg, fm, t_new
        self.space = P2Space(fm.tri)
        self.rho, self.mu = fm.rho, fm.mu
        self.blocks = assemble_interface_blocks(fm, self.space)
        self.C = pressure_matrix(self.space)
        self.load = load_vector(self.space, _forcing(problem, self.space, self.rho, t_new))
        self.fdiv_q = _fdiv(problem, self.space, t_new)

    def constraints(self, node_positions):
        g = _g_nodes(self.problem, node_positions, self.t)
        cons = velocity_constraints(self.space, g)
        beta = -continuity_rhs(self.space, dirichlet_flux(self.space, g), self.fdiv_q)
        return cons, beta

    def system(self, B, c, cons, beta):
        b = self.blocks
        return BlockSystem(B=B, C=self.C, Nb=b.N_bulk, N=b.N, A=b.A, c=c, beta=beta, X=b.points,
                           constraints=cons, tau=self.cfg.tau, gamma=self.problem.gamma,
                           n_vertices=self.fm.tri.n_vertices)


def _remesh(problem, cfg, fm):
    return remesh_keep_interface(fm, problem.domain)


def _lattice(problem, cfg):
    return cfg.lattice_factor * problem.h_char


def _sup(x):
    return float(np.max(np.abs(x))) if np.size(x) else 0.0


def _move(problem, cfg, fm, dX):
    """Smooth the bulk mesh to follow the interface; remesh when needed."""
    psi = Elasticity(fm).solve(dX)
    moved, inverted = apply_displacement(fm, psi)
    if inverted or needs_remesh(moved.tri, cfg.c_a):
        return _remesh(problem, cfg, moved), True
    return moved, False


class _EulerianAssembly:
    """Linear systems of one explicit, Picard or skew-symmetric step."""

    MODES = {"aex": "explicit", "aim": "picard", "b": "antisymmetric"}

    def __init__(self, state: SchemeState, problem: Problem, cfg: SchemeConfig):
        fm = state.fm
        self.st = st = _Step(problem, cfg, fm, state.t + cfg.tau)
        self.cfg = cfg
        space = st.space
        if state.U_mesh.tri is fm.tri:
            self.U_old = state.U
        else:
            self.U_old = transfer_velocity(state.U, state.U_mesh.tri, fm.tri,
                                           spacing=_lattice(problem, cfg))
        self.cons, self.beta = st.constraints(space.nodes)
        self.mode = self.MODES[cfg.scheme]
        self.rho_prev = None
        self.extra = 0.0
        if cfg.scheme == "b":
            prev = state.rho_prev_mesh
            if prev is None or prev.tri is fm.tri:
                self.rho_prev = state.rho_prev if state.rho_prev is not None else st.rho
            else:
                self.rho_prev = interpolate_p0(state.rho_prev, prev.tri, fm.tri)
            if st.fdiv_q is not None:
                uq = space.values_at_quadrature(self.U_old)
                self.extra = load_vector(space, 0.5 * (st.rho[:, None] * st.fdiv_q)[..., None] * uq)

    def system(self, w_coeffs=None):
        """System with transport field ``w_coeffs`` (default: the old velocity)."""
        st = self.st
        w = self.U_old if w_coeffs is None else w_coeffs
        w_q = st.space.values_at_quadrature(w)
        B, M_old = velocity_block(st.space, st.rho, st.mu, self.cfg.tau, self.mode, w_q,
                                  rho_prev=self.rho_prev)
        c = M_old @ self.U_old + st.load + self.extra
        return st.system(B, c, self.cons, self.beta)


class _AleAssembly:
    """Linear systems of the ALE fixed point on the mesh of t_m."""

    def __init__(self, state: SchemeState, problem: Problem, cfg: SchemeConfig):
        self.st = _Step(problem, cfg, state.fm, state.t + cfg.tau)
        self.cfg = cfg
        self.U_m = state.U
        self.cons, self.beta = self.st.constraints(self.st.space.nodes)

    def system(self, U_s=None, psi=None):
        """System for the iterate ``U_s`` and mesh displacement ``psi``."""
        st, tri = self.st, self.st.fm.tri
        space = st.space
        U_s = self.U_m if U_s is None else U_s
        mass_space = space if psi is None or not np.any(psi) else \
            P2Space(tri.moved(tri.vertices + psi))
        w = U_s if psi is None else U_s - p1_to_p2(tri, psi).reshape(-1) / self.cfg.tau
        w_q = space.values_at_quadrature(w)
        B, M_old = velocity_block(space, st.rho, st.mu, self.cfg.tau, "ale", w_q,
                                  mass_space=mass_space)
        return st.system(B, M_old @ self.U_m + st.load, self.cons, self.beta)


def step_system(state: SchemeState, problem: Problem, cfg: SchemeConfig) -> BlockSystem:
    """The first linear system a step of ``cfg.scheme`` solves from ``state``."""
    if cfg.scheme == "ale":
        if state.U_mesh.tri is not state.fm.tri:
            U = transfer_velocity(state.U, state.U_mesh.tri, state.fm.tri,
                                  spacing=_lattice(problem, cfg))
            state = replace(state, U=U, U_mesh=state.fm)
        return _AleAssembly(state, problem, cfg).system()
    return _EulerianAssembly(state, problem, cfg).system()


def step_eulerian(state: SchemeState, problem: Problem, cfg: SchemeConfig):
    """One step of the explicit, Picard-implicit or skew-symmetric scheme."""
    t0 = time.perf_counter()
    fm = state.fm
    tn = state.t + cfg.tau
    asm = _EulerianAssembly(state, problem, cfg)
    sol = solve_step(asm.system(), cfg.gmres)
    its = sol.iterations
    fp = 1
    if cfg.scheme == "aim":
        U_prev = asm.U_old
        while _sup(sol.U - U_prev) > cfg.eps_f:
            if fp >= cfg.max_fixed_point:
                gap = _sup(sol.U - U_prev)
                if gap > 1e3 * cfg.eps_f:
                    raise SolverError(f"Picard iteration did not converge (gap {gap:.3e})", fp)
                log.warning("Picard iteration stopped at the cap with gap %.3e", gap)
                break
            U_prev = sol.U
            sol = solve_step(asm.system(U_prev), cfg.gmres)
            its += sol.iterations
            fp += 1
    P = CompositePressure.from_vector(sol.P, fm.tri.n_vertices).mean_zero(fm.tri).to_vector()
    new_fm, remeshed = _move(problem, cfg, fm, sol.dX)
    new = SchemeState(fm=new_fm, U=sol.U, U_mesh=fm, P=P, P_mesh=fm, kappa=sol.kappa,
                      m=state.m + 1, t=tn, n_remesh=state.n_remesh + int(remeshed),
                      rho_prev=asm.st.rho, rho_prev_mesh=fm)
    return new, StepInfo(new.m, tn, its, fp, remeshed, time.perf_counter() - t0)


def step_ale(state: SchemeState, problem: Problem, cfg: SchemeConfig, _retry=True):
    """One step of the ALE scheme (fixed point over velocity and mesh displacement)."""
    t0 = time.perf_counter()
    fm = state.fm
    if state.U_mesh.tri is not fm.tri:
        U_m = transfer_velocity(state.U, state.U_mesh.tri, fm.tri, spacing=_lattice(problem, cfg))
        state = replace(state, U=U_m, U_mesh=fm)
    tn = state.t + cfg.tau
    asm = _AleAssembly(state, problem, cfg)
    ela = Elasticity(fm)
    U_m = state.U
    U_s = U_m
    psi = np.zeros((fm.tri.n_vertices, 2))
    its = 0
    fp = 0
    remeshed = False
    while True:
        if np.any(fm.tri.moved(fm.tri.vertices + psi).areas() <= 0):
            # displaced mesh folded: remesh around the current interface and restart
            log.info("ALE displacement inverted an element at t=%.4g; remeshing", state.t)
            if not _retry:
                raise MeshError("ALE displacement inverts elements even after remeshing")
            new_fm = _remesh(problem, cfg, fm)
            U_new = transfer_velocity(U_m, fm.tri, new_fm.tri, spacing=_lattice(problem, cfg))
            st_state = replace(state, fm=new_fm, U=U_new, U_mesh=new_fm,
                               n_remesh=state.n_remesh + 1)
            return step_ale(st_state, problem, cfg, _retry=False)
        sol = solve_step(asm.system(U_s, psi), cfg.gmres)
        its += sol.iterations
        fp += 1
        psi_new = ela.solve(sol.dX)
        dU = _sup(sol.U - U_s)
        dpsi = _sup(psi_new - psi)
        U_s, psi = sol.U, psi_new
        if dU <= cfg.eps_f and dpsi <= cfg.eps_f:
            break
        if fp >= cfg.max_fixed_point:
            if max(dU, dpsi) > 1e3 * cfg.eps_f:
                raise SolverError(f"ALE fixed point did not converge (gap {max(dU, dpsi):.3e})", fp)
            log.warning("ALE fixed point stopped at the cap with gap %.3e", max(dU, dpsi))
            break
    P = CompositePressure.from_vector(sol.P, fm.tri.n_vertices).mean_zero(fm.tri).to_vector()
    new_fm, inverted = apply_displacement(fm, psi)
    U_new, U_mesh = U_s, new_fm
    if inverted or needs_remesh(new_fm.tri, cfg.c_a):
        remeshed = True
        rem = _remesh(problem, cfg, new_fm)
        src = fm.tri if inverted else new_fm.tri
        U_new = transfer_velocity(U_s, src, rem.tri, spacing=_lattice(problem, cfg))
        new_fm = U_mesh = rem
    new = SchemeState(fm=new_fm, U=U_new, U_mesh=U_mesh, P=P, P_mesh=fm, kappa=sol.kappa,
                      m=state.m + 1, t=tn, n_remesh=state.n_remesh + int(remeshed), U_solved=U_s)
    return new, StepInfo(new.m, tn, its, fp, remeshed, time.perf_counter() - t0)


def step(state: SchemeState, problem: Problem, cfg: SchemeConfig):
    if cfg.scheme == "ale":
        new, info = step_ale(state, problem, cfg)
    else:
        new, info = step_eulerian(state, problem, cfg)
    if cfg.check_fitted and not fitted_invariant(new.fm):
        raise MeshError(f"interface no longer fitted after step {new.m}")
    return new, info


def step_aex(state, problem, cfg):
    return step(state, problem, replace(cfg, scheme="aex"))


def step_aim(state, problem, cfg):
    return step(state, problem, replace(cfg, scheme="aim"))


def step_b(state, problem, cfg):
    return step(state, problem, replace(cfg, scheme="b"))


@dataclass
class RunResult:
    state: SchemeState
    infos: list = field(default_factory=list)
    seconds: float = 0.0


def run(problem: Problem, cfg: SchemeConfig, hooks=(), state: SchemeState | None = None,
        t_end: float | None = None) -> RunResult:
    """Advance ``floor(T / tau)`` steps, calling ``hook(state, info)`` after each
    step (and once with ``info=None`` for the initial state)."""
    t0 = time.perf_counter()
    state = state or initial_state(problem)
    for h in hooks:
        h(state, None)
    M = n_steps(cfg.T if t_end is None else t_end, cfg.tau)
    infos = []
    for _ in range(M):
        state, info = step(state, problem, cfg)
        infos.append(info)
        if info.remeshed:
            log.info("remesh at step %d (t=%.4g), total %d", info.m, info.t, state.n_remesh)
        for h in hooks:
            h(state, info)
    return RunResult(state, infos, time.perf_counter() - t0)
