"""Error measures against exact solutions, EOC, rising-bubble quantities and
convergence-table runners."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fe import CompositePressure, P2Space
from .geometry import MINUS, inner_measures, polygon_area
from .problems import ExactSolution, Problem, expanding_bubble, n_steps
from .schemes import SchemeConfig, SchemeState, run

CONVERGENCE_LEVELS = {32: 6.4e-2, 64: 1.6e-2, 128: 4e-3, 256: 1e-3}


# -- disk clipping ---------------------------------------------------------------
def _clip(poly, a, b):
    """Part of convex polygon ``poly`` left of the directed line a -> b."""
    d = b - a
    s = d[0] * (poly[:, 1] - a[1]) - d[1] * (poly[:, 0] - a[0])
    inside = s >= 0
    if inside.all():
        return poly
    if not inside.any():
        return poly[:0]
    sj = np.roll(s, -1)
    cross = inside != np.roll(inside, -1)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(cross, s / (s - sj), 0.0)
    hit = poly + w[:, None] * (np.roll(poly, -1, axis=0) - poly)
    pts = np.stack([poly, hit], axis=1)
    return pts[np.stack([inside, cross], axis=1)]


def _moments(poly):
    """Area and first moments (int x, int y) of a counter-clockwise polygon."""
    if len(poly) < 3:
        return 0.0, 0.0, 0.0
    x, y = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cr = x * yn - xn * y
    a = 0.5 * cr.sum()
    return a, float(((x + xn) * cr).sum() / 6.0), float(((y + yn) * cr).sum() / 6.0)


def disk_polygon(center, radius, n=4096):
    """Regular n-gon with the same area as the disk."""
    rr = radius * math.sqrt(2.0 * math.pi / (n * math.sin(2.0 * math.pi / n)))
    th = 2.0 * np.pi * np.arange(n) / n
    return np.c_[center[0] + rr * np.cos(th), center[1] + rr * np.sin(th)]


def disk_intersections(tri, center, radius, n=4096):
    """Per element: area and first moments of element ∩ disk.

    Elements with all vertices inside are taken whole; those at distance at
    least ``radius`` from the centre are empty; the rest are clipped against a
    fine area-preserving polygon of the disk.
    """
    c = np.asarray(center, float)
    P = tri.vertices[tri.triangles]  # T,3,2
    area = tri.areas()
    out = np.zeros((tri.n_triangles, 3))
    d = np.hypot(P[..., 0] - c[0], P[..., 1] - c[1])
    full = np.all(d <= radius, axis=1)
    out[full, 0] = area[full]
    out[full, 1:] = area[full, None] * P[full].mean(axis=1)
    # distance from the centre to each element (0 when the centre is inside)
    dist = np.full(tri.n_triangles, np.inf)
    for i in range(3):
        a, b = P[:, i], P[:, (i + 1) % 3]
        e = b - a
        s = np.clip(np.einsum("tc,tc->t", c - a, e) / np.einsum("tc,tc->t", e, e), 0.0, 1.0)
        dist = np.minimum(dist, np.hypot(*(a + s[:, None] * e - c).T))
    lam = _inside_triangle(P, c)
    dist[lam] = 0.0
    cut = np.flatnonzero(~full & (dist < radius))
    disk = disk_polygon(c, radius, n)
    for t in cut:
        poly = disk
        lo, hi = P[t].min(axis=0), P[t].max(axis=0)
        # restrict the disk polygon to the element's bounding box first
        poly = _clip(_clip(_clip(_clip(poly, np.array([lo[0], 0.0]), np.array([lo[0], -1.0])),
                                 np.array([hi[0], 0.0]), np.array([hi[0], 1.0])),
                           np.array([0.0, lo[1]]), np.array([1.0, lo[1]])),
                     np.array([0.0, hi[1]]), np.array([-1.0, hi[1]]))
        for i in range(3):
            if len(poly) == 0:
                break
            poly = _clip(poly, P[t, i], P[t, (i + 1) % 3])
        out[t] = _moments(poly)
    return out


def _inside_triangle(P, p):
    a, b, c = P[:, 0], P[:, 1], P[:, 2]

    def side(u, v):
        return (v[:, 0] - u[:, 0]) * (p[1] - u[:, 1]) - (v[:, 1] - u[:, 1]) * (p[0] - u[:, 0])

    return (side(a, b) >= 0) & (side(b, c) >= 0) & (side(c, a) >= 0)


# -- error norms -------------------------------------------------------------------
def velocity_errors(U, tri, exact: ExactSolution, t):
    """L2 and H1 norms of U - I_2 u on ``tri``."""
    space = P2Space(tri)
    Iu = space.interpolate(lambda z: exact.velocity(z, t))
    E = np.asarray(U, float) - Iu
    v = space.values_at_quadrature(E)
    g = space.gradients_at_quadrature(E)
    l2 = float(np.einsum("tq,tqc,tqc->", space.wdet, v, v))
    h1s = float(np.einsum("tq,tqab,tqab->", space.wdet, g, g))
    return math.sqrt(max(l2, 0.0)), math.sqrt(max(l2 + h1s, 0.0))


def pressure_levels_for(exact: ExactSolution, t, inner_area=None):
    """Inside/outside values of the exact pressure; with ``inner_area`` the
    mean correction uses that (polygonal) area instead of the exact disk."""
    p_in, p_out = exact.pressure_levels(t)
    if inner_area is None:
        return p_in, p_out
    amp = p_in - p_out
    frac = (inner_area - exact.hole_area) / exact.domain_area
    return amp * (1.0 - frac), -amp * frac


def pressure_error(P, tri, exact: ExactSolution, t, inner_area=None, n_poly=4096):
    """Exact L2 norm of P - p for the composite pressure P (linear per element)
    and the piecewise constant exact pressure (jump across |z| = r(t))."""
    p_in, p_out = pressure_levels_for(exact, t, inner_area)
    pc = CompositePressure.from_vector(P, tri.n_vertices)
    vals = pc.p1[tri.triangles] + pc.p0[:, None]  # T,3 vertex values (linear per element)
    area = tri.areas()
    # int_T e^2 for linear e: area/12 * (sum e_i^2 + (sum e_i)^2)
    e = vals - p_out
    base = area / 12.0 * (np.einsum("ti,ti->t", e, e) + e.sum(axis=1) ** 2)
    mom = disk_intersections(tri, (0.0, 0.0), exact.radius(t), n_poly)
    # int_{T∩D} P from the area and first moments of T∩D
    P_verts = tri.vertices[tri.triangles]
    lam_num = _linear_integral(P_verts, vals, mom)
    corr = (p_out - p_in) * (2.0 * lam_num - (p_in + p_out) * mom[:, 0])
    return math.sqrt(max(float(base.sum() + corr.sum()), 0.0))


def _linear_integral(P, vals, mom):
    """int over a subregion of each element of the linear function with vertex
    values ``vals``, given the subregion's area and first moments."""
    a, b, c = P[:, 0], P[:, 1], P[:, 2]
    det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    # gradient of the linear function
    d1 = vals[:, 1] - vals[:, 0]
    d2 = vals[:, 2] - vals[:, 0]
    gx = (d1 * (c[:, 1] - a[:, 1]) - d2 * (b[:, 1] - a[:, 1])) / det
    gy = (d2 * (b[:, 0] - a[:, 0]) - d1 * (c[:, 0] - a[:, 0])) / det
    A, Mx, My = mom[:, 0], mom[:, 1], mom[:, 2]
    return vals[:, 0] * A + gx * (Mx - a[:, 0] * A) + gy * (My - a[:, 1] * A)


def interface_error(points, exact: ExactSolution, t):
    return float(np.max(np.abs(np.hypot(points[:, 0], points[:, 1]) - exact.radius(t))))


@dataclass
class ErrorReport:
    J: int
    interface: float
    velocity_l2: float
    velocity_h1: float
    pressure_l2: float
    cpu: float = 0.0
    n_remesh: int = 0
    n_elements: int = 0
    eoc_velocity: float = math.nan
    eoc_pressure: float = math.nan
    eoc_interface: float = math.nan


class ErrorAccumulator:
    """Hook collecting the time-accumulated errors of a run.

    ``inner_area="polygonal"`` uses the discrete inner area for the mean
    correction of the exact pressure, ``"exact"`` the disk area.
    """

    def __init__(self, exact: ExactSolution, tau, inner_area="polygonal"):
        self.exact, self.tau, self.inner_area = exact, tau, inner_area
        self.interface = 0.0
        self.v_l2 = self.v_h1 = self.p_l2 = 0.0
        self.steps = 0

    def __call__(self, state: SchemeState, info):
        if info is None:
            return
        t = state.t
        self.interface = max(self.interface, interface_error(state.fm.interface_points(),
                                                            self.exact, t))
        l2, h1 = velocity_errors(state.solved_velocity(), state.P_mesh.tri, self.exact, t)
        area = None
        if self.inner_area == "polygonal":
            area = polygon_area(state.fm.interface_points()) if state.fm.interface else 0.0
            area = abs(area)
        pe = pressure_error(state.P, state.P_mesh.tri, self.exact, t, area)
        self.v_l2 += self.tau * l2 ** 2
        self.v_h1 += self.tau * h1 ** 2
        self.p_l2 += self.tau * pe ** 2
        self.steps += 1

    def report(self, J, cpu=0.0, n_remesh=0, n_elements=0):
        return ErrorReport(J, self.interface, math.sqrt(self.v_l2), math.sqrt(self.v_h1),
                           math.sqrt(self.p_l2), cpu, n_remesh, n_elements)


def eoc(e0, e1, h0, h1):
    """Estimated order of convergence ln(e1/e0) / ln(h1/h0)."""
    if not (e0 > 0 and e1 > 0 and h0 > 0 and h1 > 0) or h0 == h1:
        return math.nan
    return math.log(e1 / e0) / math.log(h1 / h0)


def attach_eoc(reports):
    """Fill EOC fields, with h proportional to 1 / J."""
    for prev, cur in zip(reports, reports[1:]):
        h0, h1 = 1.0 / prev.J, 1.0 / cur.J
        cur.eoc_velocity = eoc(prev.velocity_l2, cur.velocity_l2, h0, h1)
        cur.eoc_pressure = eoc(prev.pressure_l2, cur.pressure_l2, h0, h1)
        cur.eoc_interface = eoc(prev.interface, cur.interface, h0, h1)
    return reports


def convergence_run(kind, scheme, J, tau=None, T=1.0, alpha=0.15, config=None,
                    inner_area="polygonal"):
    """Run one level of an expanding-bubble experiment and return its errors."""
    problem = expanding_bubble(kind, J, alpha)
    tau = CONVERGENCE_LEVELS.get(J, 6.4e-2 * (32.0 / J) ** 2) if tau is None else tau
    cfg = config or SchemeConfig(scheme=scheme, tau=tau, T=T)
    if config is not None:
        cfg = SchemeConfig(**{**config.__dict__, "scheme": scheme, "tau": tau, "T": T})
    acc = ErrorAccumulator(problem.exact, tau, inner_area)
    res = run(problem, cfg, [acc])
    cpu = sum(i.seconds for i in res.infos)
    return acc.report(J, cpu, res.state.n_remesh, res.state.fm.tri.n_triangles), res


def convergence_table(kind, scheme, levels=(32, 64, 128, 256), T=1.0, alpha=0.15, config=None,
                      progress=None):
    reports = []
    for J in levels:
        rep, _ = convergence_run(kind, scheme, J, T=T, alpha=alpha, config=config)
        reports.append(rep)
        if progress:
            progress(rep)
    return attach_eoc(reports)


# -- rising bubble -------------------------------------------------------------------
@dataclass
class BubbleSeries:
    t: list = field(default_factory=list)
    z_c: list = field(default_factory=list)
    sphericity: list = field(default_factory=list)
    v_c: list = field(default_factory=list)
    rel_area: list = field(default_factory=list)
    n_elements: list = field(default_factory=list)
    n_remesh: list = field(default_factory=list)

    COLUMNS = ("t", "z_c", "sphericity", "V_c", "rel_area", "n_elements", "n_remesh")

    def rows(self):
        return list(zip(self.t, self.z_c, self.sphericity, self.v_c, self.rel_area,
                        self.n_elements, self.n_remesh))


def sphericity(area, length):
    """Circle perimeter of equal area over the actual perimeter (2d)."""
    if length <= 0:
        return math.nan
    return math.sqrt(math.pi) * math.sqrt(4.0 * area) / length


def bubble_quantities(state: SchemeState, area0=None):
    """(z_c, sphericity, V_c, rel_area) of the inner phase."""
    fm = state.fm
    area, length = inner_measures(fm)
    # centre of mass on the interface mesh
    tri = fm.tri
    inner = fm.labels == MINUS
    a = tri.areas()
    zc = float((a[inner] * tri.barycentres()[inner, 1]).sum() / a[inner].sum()) \
        if inner.any() else math.nan
    # rise velocity on the mesh carrying U
    um = state.U_mesh
    space = P2Space(um.tri)
    inner_u = um.labels == MINUS
    uq = space.values_at_quadrature(state.U)[..., 1]
    vol = float(space.wdet[inner_u].sum())
    vc = float((space.wdet[inner_u] * uq[inner_u]).sum() / vol) if vol > 0 else math.nan
    rel = area / area0 if area0 else 1.0
    return zc, sphericity(area, length), vc, rel


class BubbleRecorder:
    """Hook recording the bubble time series (including t = 0)."""

    def __init__(self):
        self.series = BubbleSeries()
        self.area0 = None

    def __call__(self, state: SchemeState, info):
        if self.area0 is None:
            self.area0 = inner_measures(state.fm)[0]
        zc, sph, vc, rel = bubble_quantities(state, self.area0)
        s = self.series
        s.t.append(state.t)
        s.z_c.append(zc)
        s.sphericity.append(sph)
        s.v_c.append(vc)
        s.rel_area.append(rel)
        s.n_elements.append(state.fm.tri.n_triangles)
        s.n_remesh.append(state.n_remesh)


def bubble_run(problem: Problem, config: SchemeConfig, hooks=()):
    rec = BubbleRecorder()
    res = run(problem, config, [rec, *hooks])
    return rec.series, res


__all__ = ["BubbleRecorder", "BubbleSeries", "CONVERGENCE_LEVELS", "ErrorAccumulator",
           "ErrorReport", "attach_eoc", "bubble_quantities", "bubble_run", "convergence_run",
           "convergence_table", "disk_intersections", "eoc", "interface_error", "n_steps",
           "pressure_error", "sphericity", "velocity_errors"]
