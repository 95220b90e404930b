"""Report figures (PNG) for convergence tables and bubble runs."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.6),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.frameon": False,
    "savefig.bbox": "tight",
}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_convergence(reports, path, title=None):
    """Log-log errors against J with a reference first-order slope."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        J = np.array([r.J for r in reports], float)
        series = {
            "interface": [r.interface for r in reports],
            "velocity L2": [r.velocity_l2 for r in reports],
            "velocity H1": [r.velocity_h1 for r in reports],
            "pressure L2": [r.pressure_l2 for r in reports],
        }
        for name, vals in series.items():
            v = np.asarray(vals, float)
            ok = v > 0
            if ok.any():
                ax.loglog(J[ok], v[ok], "o-", label=name)
        if len(J) > 1:
            p = np.array([r.pressure_l2 for r in reports], float)
            if p[0] > 0:
                ax.loglog(J, p[0] * J[0] / J, "k:", lw=0.8, label="order 1")
                ax.loglog(J, p[0] * (J[0] / J) ** 2 * 1e-2, "k--", lw=0.8, label="order 2")
        ax.set_xlabel("interface vertices J")
        ax.set_ylabel("error")
        if title:
            ax.set_title(title)
        ax.legend()
        return _save(fig, path)


def plot_series(series, path, title=None):
    """Centre of mass, sphericity and rise velocity against time."""
    t = np.asarray(series.t)
    with plt.rc_context({**STYLE, "figure.figsize": (5.0, 7.0)}):
        fig, axes = plt.subplots(3, 1, sharex=True)
        for ax, vals, label in zip(axes, (series.z_c, series.sphericity, series.v_c),
                                   ("centre of mass z_c", "sphericity", "rise velocity V_c")):
            ax.plot(t, vals, lw=1.2)
            ax.set_ylabel(label)
        axes[-1].set_xlabel("t")
        if title:
            axes[0].set_title(title)
        return _save(fig, path)


def plot_interfaces(snapshots, path, domain=None, title=None):
    """Interface polygons at several times: ``snapshots`` is a list of (t, points)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for t, pts in snapshots:
            p = np.vstack([pts, pts[:1]])
            ax.plot(p[:, 0], p[:, 1], lw=1.0, label=f"t = {t:.3g}")
        if domain is not None:
            x0, y0, x1, y1 = domain
            ax.plot([x0, x1, x1, x0, x0], [y0, y0, y1, y1, y0], "k-", lw=0.8)
        ax.set_aspect("equal")
        if len(snapshots) <= 8:
            ax.legend(fontsize=7)
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_mesh(fm, path, title=None):
    """Bulk mesh with the inner phase shaded and the interface highlighted."""
    tri = fm.tri
    with plt.rc_context({**STYLE, "axes.grid": False}):
        fig, ax = plt.subplots()
        ax.tripcolor(tri.vertices[:, 0], tri.vertices[:, 1], tri.triangles,
                     facecolors=(fm.labels < 0).astype(float), cmap="Blues", vmin=0, vmax=2,
                     edgecolors="0.6", linewidth=0.2)
        if fm.interface is not None:
            q = fm.interface_points()
            q = np.vstack([q, q[:1]])
            ax.plot(q[:, 0], q[:, 1], "r-", lw=1.0)
        ax.set_aspect("equal")
        if title:
            ax.set_title(title)
        return _save(fig, path)
