"""Command line interface: ``tideflow converge|bubble|custom``.

Exit codes: 0 success, 1 solver failure, 2 configuration error, 3 I/O error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io as tio
from .bench import CONVERGENCE_LEVELS, BubbleRecorder, ErrorAccumulator, attach_eoc
from .geometry import DIRICHLET, SLIP, MeshError, Phases
from .meshing import DomainSpec, load_fitted
from .problems import BENCHMARKS, Problem, circle, expanding_bubble, rising_bubble
from .schemes import SCHEMES, SchemeConfig, initial_state, run
from .solver import GmresSettings, SolverError

log = logging.getLogger("tideflow")

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3
LEVELS = tuple(sorted(CONVERGENCE_LEVELS))  # J for level 0, 1, ...
CASES = {"sol1": "linear", "linear": "linear", "sol2": "source", "source": "source"}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str = "converge"
    scheme: str = "aex"
    case: str = "sol1"
    levels: tuple = (0,)
    J: int | None = None
    h_char: float | None = None
    tau: float | None = None
    T: float | None = None
    alpha: float = 0.15
    eps_f: float = 1e-8
    rtol: float = 1e-9
    restart: int = 50
    maxit: int = 400
    c_a: float = 20.0
    out: str = "tideflow-out"
    vtk_every: int = 0
    plots: bool = True
    benchmark: int = 1
    # custom runs
    mesh: str | None = None
    domain: tuple = (0.0, 0.0, 1.0, 2.0)
    center: tuple = (0.5, 0.5)
    radius: float = 0.25
    rho_plus: float = 1000.0
    rho_minus: float = 100.0
    mu_plus: float = 10.0
    mu_minus: float = 1.0
    gamma: float = 24.5
    gravity: tuple = (0.0, -0.98)
    walls: str = "dirichlet,slip,dirichlet,slip"

    def scheme_config(self, tau, T):
        return SchemeConfig(scheme=self.scheme, tau=tau, T=T, eps_f=self.eps_f, c_a=self.c_a,
                            gmres=GmresSettings(self.rtol, self.restart, self.maxit))


def _floats(text, n=None):
    vals = tuple(float(v) for v in str(text).replace(" ", "").split(",") if v != "")
    if n is not None and len(vals) != n:
        raise ValueError(f"expected {n} comma-separated numbers")
    return vals


def _bool(text):
    s = str(text).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


PARSERS = {
    "scheme": str, "case": str, "levels": lambda s: tuple(int(v) for v in str(s).split(",")),
    "level": lambda s: (int(s),), "J": int, "h_char": float, "tau": float, "T": float,
    "alpha": float, "eps_f": float, "rtol": float, "restart": int, "maxit": int, "c_a": float,
    "out": str, "vtk_every": int, "plots": _bool, "benchmark": int, "mesh": str,
    "domain": lambda s: _floats(s, 4), "center": lambda s: _floats(s, 2), "radius": float,
    "rho_plus": float, "rho_minus": float, "mu_plus": float, "mu_minus": float, "gamma": float,
    "gravity": lambda s: _floats(s, 2), "walls": str,
}


def _apply(cfg: RunConfig, key, value, source):
    key = key.replace("-", "_")
    if key not in PARSERS:
        raise ConfigError(f"unknown key {key!r} ({source})")
    try:
        v = PARSERS[key](value) if isinstance(value, str) else value
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid value for {key}: {value!r} ({exc})") from exc
    setattr(cfg, "levels" if key == "level" else key, v)


def validate(cfg: RunConfig):
    if cfg.scheme not in SCHEMES:
        raise ConfigError(f"scheme must be one of {', '.join(SCHEMES)}")
    if cfg.command == "converge" and cfg.case not in CASES:
        raise ConfigError("case must be sol1 or sol2")
    for name in ("tau", "T", "h_char", "radius", "eps_f", "rtol"):
        v = getattr(cfg, name)
        if v is not None and not v > 0:
            raise ConfigError(f"{name} must be positive")
    for name in ("restart", "maxit", "J"):
        v = getattr(cfg, name)
        if v is not None and v <= 0:
            raise ConfigError(f"{name} must be positive")
    if cfg.J is not None and cfg.J < 3:
        raise ConfigError("J must be at least 3")
    if not 0 < cfg.c_a < 60:
        raise ConfigError("c_a must lie in (0, 60) degrees")
    if cfg.vtk_every < 0:
        raise ConfigError("vtk_every must be non-negative")
    if any(lv < 0 or lv >= len(LEVELS) for lv in cfg.levels):
        raise ConfigError(f"levels must lie in 0..{len(LEVELS) - 1}")
    if cfg.command == "bubble" and cfg.benchmark not in BENCHMARKS:
        raise ConfigError("benchmark must be 1 or 2")
    for name in ("rho_plus", "rho_minus", "mu_plus", "mu_minus"):
        if not getattr(cfg, name) > 0:
            raise ConfigError(f"{name} must be positive")
    if cfg.gamma < 0:
        raise ConfigError("gamma must be non-negative")
    if cfg.command == "custom":
        x0, y0, x1, y1 = cfg.domain
        if not (x1 > x0 and y1 > y0):
            raise ConfigError("domain must be x0,y0,x1,y1 with x1 > x0 and y1 > y0")
        walls = cfg.walls.split(",")
        if len(walls) != 4 or any(w not in ("dirichlet", "slip") for w in walls):
            raise ConfigError("walls must list 4 of dirichlet|slip (bottom,right,top,left)")
    return cfg


def build_parser():
    p = argparse.ArgumentParser(
        prog="tideflow",
        description="Two-phase incompressible flow with surface tension on interface-fitted meshes.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key=value file; flags override it")
        sp.add_argument("--scheme", choices=SCHEMES)
        sp.add_argument("--tau", type=str)
        sp.add_argument("--T", type=str)
        sp.add_argument("--eps-f", dest="eps_f", type=str)
        sp.add_argument("--rtol", type=str)
        sp.add_argument("--restart", type=str)
        sp.add_argument("--maxit", type=str)
        sp.add_argument("--c-a", dest="c_a", type=str, help="remesh angle in degrees")
        sp.add_argument("--out", type=str, help="output directory")
        sp.add_argument("--vtk-every", dest="vtk_every", type=str,
                        help="write VTK every n steps (0 = final only)")
        sp.add_argument("--no-plots", dest="plots", action="store_const", const="false")

    c = sub.add_parser("converge", help="expanding-bubble convergence experiment")
    common(c)
    c.add_argument("--case", choices=sorted(CASES))
    c.add_argument("--level", type=str, help="single level (0 -> J=32, 1 -> 64, ...)")
    c.add_argument("--levels", type=str, help="comma-separated levels, e.g. 0,1")
    c.add_argument("--alpha", type=str)

    b = sub.add_parser("bubble", help="rising-bubble benchmark")
    common(b)
    b.add_argument("--benchmark", type=str, help="1 or 2")
    b.add_argument("--J", type=str, help="interface vertices (default 32)")

    u = sub.add_parser("custom", help="user-defined bubble in a rectangle (or MSH mesh)")
    common(u)
    u.add_argument("--mesh", type=str, help="MSH 2.2 file with a fitted interface")
    u.add_argument("--domain", type=str, help="x0,y0,x1,y1")
    u.add_argument("--center", type=str)
    u.add_argument("--radius", type=str)
    u.add_argument("--J", type=str)
    u.add_argument("--h-char", dest="h_char", type=str)
    u.add_argument("--rho-plus", dest="rho_plus", type=str)
    u.add_argument("--rho-minus", dest="rho_minus", type=str)
    u.add_argument("--mu-plus", dest="mu_plus", type=str)
    u.add_argument("--mu-minus", dest="mu_minus", type=str)
    u.add_argument("--gamma", type=str)
    u.add_argument("--gravity", type=str, help="gx,gy")
    u.add_argument("--walls", type=str, help="bottom,right,top,left each dirichlet|slip")
    return p


def parse_config(argv=None) -> tuple[RunConfig, int]:
    """Parsed and validated config (defaults < config file < flags) and verbosity."""
    parser = build_parser()
    ns = parser.parse_args(argv)
    cfg = RunConfig(command=ns.command)
    if ns.config:
        try:
            kv = tio.read_key_values(ns.config)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        for k, v in kv.items():
            _apply(cfg, k, v, ns.config)
    for k, v in vars(ns).items():
        if k in ("command", "config", "verbose") or v is None:
            continue
        _apply(cfg, k, v, "flag")
    return validate(cfg), ns.verbose


# -- drivers -----------------------------------------------------------------------
class VtkWriter:
    def __init__(self, out, every, prefix):
        self.out, self.every, self.prefix = Path(out), every, prefix

    def __call__(self, state, info):
        if self.every and state.m % self.every == 0:
            tio.write_vtk(state, self.out / f"{self.prefix}_{state.m:05d}.vtk")


def _progress(tag):
    def hook(state, info):
        if info is not None:
            log.info("%s step %d t=%.4g gmres=%d fp=%d%s", tag, info.m, info.t,
                     info.gmres_iterations, info.fixed_point_iterations,
                     " remesh" if info.remeshed else "")
    return hook


def run_converge(cfg: RunConfig):
    out = Path(cfg.out)
    kind = CASES[cfg.case]
    reports = []
    for lv in cfg.levels:
        J = LEVELS[lv]
        tau = cfg.tau or CONVERGENCE_LEVELS[J]
        T = cfg.T or 1.0
        problem = expanding_bubble(kind, J, cfg.alpha)
        acc = ErrorAccumulator(problem.exact, tau)
        hooks = [acc, _progress(f"J={J}"), VtkWriter(out, cfg.vtk_every, f"{cfg.case}_J{J}")]
        res = run(problem, cfg.scheme_config(tau, T), hooks)
        cpu = sum(i.seconds for i in res.infos)  # stepping only, hooks and I/O excluded
        rep = acc.report(J, cpu, res.state.n_remesh, res.state.fm.tri.n_triangles)
        reports.append(rep)
        tio.write_vtk(res.state, out / f"{cfg.case}_J{J}_final.vtk")
    attach_eoc(reports)
    table = tio.format_error_table(reports)
    sys.stdout.write(table)
    tio.write_error_table(reports, out / f"errors_{cfg.case}_{cfg.scheme}.csv")
    (out / f"errors_{cfg.case}_{cfg.scheme}.txt").write_text(table)
    if cfg.plots:
        from .plotting import plot_convergence

        plot_convergence(reports, out / f"convergence_{cfg.case}_{cfg.scheme}.png",
                         f"{cfg.case}, scheme {cfg.scheme}")
    return reports


def _bubble_common(cfg: RunConfig, problem: Problem, tau, T, tag, state=None):
    out = Path(cfg.out)
    rec = BubbleRecorder()
    snaps = []
    n_snap = max(1, int(round(T / tau)) // 6)

    def snap(state, info):
        if state.m % n_snap == 0:
            snaps.append((state.t, state.fm.interface_points().copy()))

    hooks = [rec, snap, _progress(tag), VtkWriter(out, cfg.vtk_every, tag)]
    res = run(problem, cfg.scheme_config(tau, T), hooks, state=state)
    tio.write_series_csv(rec.series, out / f"{tag}_series.csv")
    tio.write_vtk(res.state, out / f"{tag}_final.vtk")
    s = rec.series
    k = int(np.nanargmax(s.v_c)) if len(s.v_c) else 0
    summary = (f"max V_c = {s.v_c[k]:.5g} at t = {s.t[k]:.4g}; z_c(T) = {s.z_c[-1]:.5g}; "
               f"min sphericity = {np.nanmin(s.sphericity):.5g}; remeshes = {res.state.n_remesh}\n")
    sys.stdout.write(summary)
    (out / f"{tag}_summary.txt").write_text(summary)
    if cfg.plots:
        from .plotting import plot_interfaces, plot_mesh, plot_series

        plot_series(s, out / f"{tag}_series.png", tag)
        plot_interfaces(snaps, out / f"{tag}_interfaces.png", problem.domain.outer, tag)
        plot_mesh(res.state.fm, out / f"{tag}_mesh.png", f"{tag}, t = {res.state.t:.3g}")
    return s, res


def run_bubble(cfg: RunConfig):
    J = cfg.J or 32
    problem = rising_bubble(cfg.benchmark, J)
    tau = cfg.tau or 1e-3
    T = cfg.T or 3.0
    return _bubble_common(cfg, problem, tau, T, f"benchmark{cfg.benchmark}_{cfg.scheme}_J{J}")


WALLS = {"dirichlet": DIRICHLET, "slip": SLIP}


def run_custom(cfg: RunConfig):
    phases = Phases(cfg.rho_plus, cfg.rho_minus, cfg.mu_plus, cfg.mu_minus)
    grav = np.asarray(cfg.gravity, float)

    def f1(z, t):
        return np.broadcast_to(grav, np.shape(z)).copy()

    J = cfg.J or 32
    h = cfg.h_char or 2.0 * np.pi * cfg.radius / J
    sides = ("bottom", "right", "top", "left")
    markers = {s: WALLS[w] for s, w in zip(sides, cfg.walls.split(","))}
    state = None
    if cfg.mesh:
        fm = load_fitted(cfg.mesh, phases)
        v = fm.tri.vertices
        outer = (*v.min(axis=0), *v.max(axis=0))
        dom = DomainSpec(outer=tuple(float(x) for x in outer), h_char=h, markers=markers)
        gamma0 = fm.interface_points()
        problem = Problem("custom", dom, gamma0, phases, cfg.gamma, f1=f1)
        state = initial_state(problem, fm)
    else:
        dom = DomainSpec(outer=tuple(cfg.domain), h_char=h, markers=markers)
        problem = Problem("custom", dom, circle(cfg.center, cfg.radius, J), phases, cfg.gamma,
                          f1=f1)
    tau = cfg.tau or 1e-3
    T = cfg.T or 1.0
    return _bubble_common(cfg, problem, tau, T, f"custom_{cfg.scheme}", state)


def main(argv=None):
    try:
        cfg, verbose = parse_config(argv)
    except ConfigError as exc:
        print(f"tideflow: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # argparse usage errors
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    runner = {"converge": run_converge, "bubble": run_bubble, "custom": run_custom}[cfg.command]
    try:
        Path(cfg.out).mkdir(parents=True, exist_ok=True)
        runner(cfg)
    except (SolverError, MeshError) as exc:
        print(f"tideflow: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (OSError, tio.OutputError) as exc:
        print(f"tideflow: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"tideflow: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
