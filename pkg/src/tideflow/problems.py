"""Problem definitions: exact expanding-bubble solutions and rising bubbles."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .geometry import DIRICHLET, SLIP, Phases
from .meshing import DomainSpec

Field = Callable[[np.ndarray, float], np.ndarray]


def circle(center, radius, n):
    th = 2.0 * np.pi * np.arange(n) / n
    return np.c_[center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)]


@dataclass(frozen=True)
class ExactSolution:
    """Radially symmetric expanding bubble centred at the origin."""

    kind: str  # "linear" (u = alpha z) or "source" (u = alpha z / |z|^2)
    alpha: float
    r0: float
    phases: Phases
    gamma: float
    domain_area: float
    hole_area: float = 0.0

    def radius(self, t):
        if self.kind == "linear":
            return math.exp(self.alpha * t) * self.r0
        return math.sqrt(self.r0 ** 2 + 2.0 * self.alpha * t)

    def _r2(self, z):
        r2 = np.einsum("...c,...c->...", z, z)
        if np.any(r2 == 0.0):
            raise ValueError("the point source solution is undefined at the origin")
        return r2

    def velocity(self, z, t=0.0):
        z = np.asarray(z, float)
        if self.kind == "linear":
            return self.alpha * z
        r2 = self._r2(z)
        return self.alpha * z / r2[..., None]

    def velocity_gradient(self, z, t=0.0):
        z = np.asarray(z, float)
        eye = np.eye(2)
        if self.kind == "linear":
            return np.broadcast_to(self.alpha * eye, z.shape[:-1] + (2, 2)).copy()
        r2 = self._r2(z)[..., None, None]
        zz = z[..., :, None] * z[..., None, :]
        return self.alpha * (eye / r2 - 2.0 * zz / r2 ** 2)

    def pressure_levels(self, t):
        """(inside value, outside value) of the exact pressure at time t."""
        r = self.radius(t)
        ph = self.phases
        kappa = -1.0 / r
        if self.kind == "linear":
            amp = -(self.gamma - 2.0 * self.alpha * (ph.mu_plus - ph.mu_minus) * r) * kappa
        else:
            amp = -(self.gamma + 2.0 * self.alpha * (ph.mu_plus - ph.mu_minus) / r) * kappa
        frac = (math.pi * r * r - self.hole_area) / self.domain_area
        return amp * (1.0 - frac), -amp * frac

    def f1(self, z, t):
        z = np.asarray(z, float)
        if self.kind == "linear":
            return self.alpha ** 2 * z
        r2 = self._r2(z)
        return -(self.alpha ** 2) * z / (r2 ** 2)[..., None]

    def fdiv(self, z, t):
        if self.kind == "linear":
            return np.full(np.shape(z)[:-1], 2.0 * self.alpha)
        return None


@dataclass(frozen=True)
class Problem:
    """Everything a time stepper needs besides the discretisation parameters."""

    name: str
    domain: DomainSpec
    gamma0: np.ndarray
    phases: Phases
    gamma: float
    f1: Field | None = None
    f2: Field | None = None
    fdiv: Field | None = None
    g: Field | None = None
    u0: Callable[[np.ndarray], np.ndarray] | None = None
    exact: ExactSolution | None = None
    meta: dict = field(default_factory=dict)

    @property
    def h_char(self):
        return self.domain.h_char

    def with_(self, **kw):
        return replace(self, **kw)


def expanding_bubble(kind, J, alpha=0.15, phases=None, gamma=None):
    """Convergence problems: ``linear`` on (-1,1)^2 with unit parameters, or
    ``source`` on (-1,1)^2 minus [-1/3,1/3]^2 with density/viscosity jumps."""
    r0 = 0.5
    h = 2.0 * np.pi * r0 / J
    if kind == "linear":
        phases = phases or Phases(1.0, 1.0, 1.0, 1.0)
        gamma = 1.0 if gamma is None else gamma
        hole = None
    elif kind == "source":
        phases = phases or Phases(rho_plus=1e3, rho_minus=1e2, mu_plus=10.0, mu_minus=1.0)
        gamma = 1.0 if gamma is None else gamma
        hole = (-1 / 3, -1 / 3, 1 / 3, 1 / 3)
    else:
        raise ValueError(f"unknown exact solution {kind!r}")
    hole_area = 0.0 if hole is None else (2 / 3) ** 2
    dom = DomainSpec(outer=(-1.0, -1.0, 1.0, 1.0), h_char=h, hole=hole, graded=True)
    ex = ExactSolution(kind, alpha, r0, phases, gamma, 4.0 - hole_area, hole_area)
    return Problem(
        name=f"expanding-{kind}", domain=dom, gamma0=circle((0.0, 0.0), r0, J), phases=phases,
        gamma=gamma, f1=ex.f1, fdiv=ex.fdiv if kind == "linear" else None,
        g=lambda z, t: ex.velocity(z, t), u0=lambda z: ex.velocity(z, 0.0), exact=ex,
        meta={"J": J})


BENCHMARKS = {
    1: dict(phases=Phases(rho_plus=1000.0, rho_minus=100.0, mu_plus=10.0, mu_minus=1.0), gamma=24.5),
    2: dict(phases=Phases(rho_plus=1000.0, rho_minus=1.0, mu_plus=10.0, mu_minus=0.1), gamma=1.96),
}


def rising_bubble(which, J):
    """Rising bubble in (0,1) x (0,2): no-slip top/bottom, free slip left/right."""
    par = BENCHMARKS[which]
    r0 = 0.25
    h = 2.0 * np.pi * r0 / J
    markers = {"bottom": DIRICHLET, "top": DIRICHLET, "left": SLIP, "right": SLIP}
    dom = DomainSpec(outer=(0.0, 0.0, 1.0, 2.0), h_char=h, markers=markers, graded=False)
    grav = np.array([0.0, -0.98])

    def f1(z, t):
        return np.broadcast_to(grav, np.shape(z)).copy()

    return Problem(name=f"benchmark-{which}", domain=dom, gamma0=circle((0.5, 0.5), r0, J),
                   phases=par["phases"], gamma=par["gamma"], f1=f1, meta={"J": J})


def n_steps(T, tau):
    """Number of full steps that fit into [0, T]."""
    return int(math.floor(T / tau + 1e-9))
