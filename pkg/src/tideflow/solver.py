"""Interface condensation, Schur reduction and preconditioned GMRES."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import BlockSystem


class SolverError(RuntimeError):
    """Linear solve failed; carries the iteration count and final residual."""

    def __init__(self, msg, iterations=0, residual=math.nan):
        super().__init__(f"{msg} (iterations={iterations}, relative residual={residual:.3e})")
        self.iterations = iterations
        self.residual = residual


@dataclass(frozen=True)
class GmresSettings:
    rtol: float = 1e-9
    restart: int = 50
    maxit: int = 400


@dataclass
class GmresResult:
    x: np.ndarray
    iterations: int
    residual: float


def gmres(op, rhs, precond=None, rtol=1e-9, restart=50, maxit=400):
    """Restarted GMRES to ``||op x - rhs|| <= rtol ||rhs||``.

    ``maxit`` bounds the total number of inner iterations.  Raises
    :class:`SolverError` when the tolerance is not met.
    """
    rhs = np.asarray(rhs, float)
    bn = float(np.linalg.norm(rhs))
    if bn == 0.0:
        return GmresResult(np.zeros_like(rhs), 0, 0.0)
    n = len(rhs)
    A = op if isinstance(op, spla.LinearOperator) or sp.issparse(op) or isinstance(op, np.ndarray) \
        else spla.LinearOperator((n, n), matvec=op)
    M = None
    if precond is not None:
        M = precond if isinstance(precond, spla.LinearOperator) else \
            spla.LinearOperator((n, n), matvec=precond)
    count = [0]

    def cb(_):
        count[0] += 1

    restart = max(1, min(restart, n))
    cycles = max(1, math.ceil(maxit / restart))
    x, info = spla.gmres(A, rhs, rtol=rtol, atol=0.0, restart=restart, maxiter=cycles, M=M,
                         callback=cb, callback_type="pr_norm")
    res = float(np.linalg.norm(rhs - A @ x)) / bn
    if info != 0 or res > rtol * (1 + 1e-6):
        raise SolverError("GMRES did not converge", count[0], res)
    return GmresResult(x, count[0], res)


class CondensedInterface:
    """Dense LU of [[0, -N^T / tau], [N, A]] acting on (curvature, displacement)."""

    def __init__(self, N, A, tau):
        K = N.shape[1]
        self.K = K
        Xi = np.zeros((3 * K, 3 * K))
        Xi[:K, K:] = -N.T.toarray() / tau
        Xi[K:, :K] = N.toarray()
        Xi[K:, K:] = A.toarray()
        self.matrix = Xi
        try:
            self.lu = sla.lu_factor(Xi, check_finite=True)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise SolverError(f"singular interface operator: {exc}") from exc
        if np.any(np.abs(np.diag(self.lu[0])) < 1e-14 * np.abs(Xi).max()):
            raise SolverError("singular interface operator")
        # curvature response to a unit normal-velocity residual
        E = np.zeros((3 * K, K))
        E[:K] = np.eye(K)
        self.Z = sla.lu_solve(self.lu, E)[:K]

    def solve(self, b):
        return sla.lu_solve(self.lu, b)


class SchurOperator:
    """U -> B U + gamma Nb Z Nb^T U (curvature and displacement eliminated)."""

    def __init__(self, system: BlockSystem, cond: CondensedInterface | None):
        self.B = system.B
        self.Nb = system.Nb
        self.gamma = system.gamma
        self.cond = cond

    def matvec(self, u):
        out = self.B @ u
        if self.cond is not None and self.gamma != 0.0:
            out = out + self.gamma * (self.Nb @ (self.cond.Z @ (self.Nb.T @ u)))
        return out

    def dense(self):
        S = self.B.toarray()
        if self.cond is not None and self.gamma != 0.0:
            Nb = self.Nb.toarray()
            S = S + self.gamma * Nb @ self.cond.Z @ Nb.T
        return S


def doctored_preconditioner(Bff, Cf, n_vertices):
    """LU of [[B, C], [C^T, 0]] with one P1 and one P0 pressure dof pinned."""
    nu = Bff.shape[0]
    npr = Cf.shape[1]
    pins = np.array([nu, nu + n_vertices])
    K = sp.bmat([[Bff, Cf], [Cf.T, None]], format="csr")
    keep = np.ones(nu + npr)
    keep[pins] = 0.0
    D = sp.diags(keep)
    K = (D @ K @ D + sp.diags(1.0 - keep)).tocsc()
    try:
        lu = spla.splu(K)
    except RuntimeError as exc:
        raise SolverError(f"preconditioner factorization failed: {exc}") from exc

    def apply(r):
        return lu.solve(np.asarray(r, float))

    return spla.LinearOperator((nu + npr, nu + npr), matvec=apply), K


@dataclass
class StepSolution:
    U: np.ndarray
    P: np.ndarray
    kappa: np.ndarray
    dX: np.ndarray
    iterations: int
    residual: float


def solve_step(system: BlockSystem, settings: GmresSettings = GmresSettings()) -> StepSolution:
    """Solve the coupled system with Dirichlet/slip lifting, Schur reduction
    and doctored-preconditioned GMRES; the pressure is returned mean-free
    only up to the redundancy, callers normalise with ``mean_zero_project``."""
    nu = system.n_velocity
    npr = system.n_pressure
    K = system.n_interface
    cons = system.constraints
    fixed = np.zeros(nu, dtype=bool)
    fixed[cons.dofs] = True
    free = np.flatnonzero(~fixed)
    Uc = np.zeros(nu)
    Uc[cons.dofs] = cons.values

    cond = CondensedInterface(system.N, system.A, system.tau) if K > 0 else None
    S = SchurOperator(system, cond)
    rhs_u = system.c.copy()
    if cond is not None and system.gamma != 0.0:
        b = np.zeros(3 * K)
        b[K:] = system.A @ system.X.reshape(-1)
        rhs_u -= system.gamma * (system.Nb @ cond.solve(b)[:K])
    rhs_u -= S.matvec(Uc)
    rhs_p = system.beta - system.C.T @ Uc

    Bff = system.B[free][:, free]
    Cf = system.C[free]
    nf = len(free)

    def op(x):
        u = np.zeros(nu)
        u[free] = x[:nf]
        y = np.empty(nf + npr)
        y[:nf] = S.matvec(u)[free] + Cf @ x[nf:]
        y[nf:] = Cf.T @ x[:nf]
        return y

    prec, _ = doctored_preconditioner(Bff, Cf, system.n_vertices)
    rhs = np.r_[rhs_u[free], rhs_p]
    res = gmres(spla.LinearOperator((nf + npr, nf + npr), matvec=op), rhs, prec,
                settings.rtol, settings.restart, settings.maxit)
    U = Uc.copy()
    U[free] = res.x[:nf]
    P = res.x[nf:]
    if cond is not None:
        b = np.r_[-(system.Nb.T @ U), -(system.A @ system.X.reshape(-1))]
        y = cond.solve(b)
        kappa, dX = y[:K], y[K:].reshape(-1, 2)
    else:
        kappa, dX = np.zeros(0), np.zeros((0, 2))
    return StepSolution(U, P, kappa, dX, res.iterations, res.residual)
