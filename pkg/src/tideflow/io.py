"""Output writers (VTK legacy, CSV series, error tables) and key=value config files."""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .fe import CompositePressure

FLOAT = "%.9g"


class OutputError(OSError):
    """An output file could not be written."""


def _open(path):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return open(path, "w", newline="")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def _fmt(x):
    return FLOAT % x


def subdivided_cells(tri):
    """Split every triangle into 4 using its edge-midpoint nodes (P2 numbering)."""
    nv = tri.n_vertices
    a, b, c = tri.triangles.T
    e = nv + tri.tri_edges  # edge k of a triangle is opposite local vertex k
    ea, eb, ec = e[:, 0], e[:, 1], e[:, 2]
    cells = np.stack([np.c_[a, ec, eb], np.c_[ec, b, ea], np.c_[eb, ea, c], np.c_[ea, eb, ec]],
                     axis=1)
    return cells.reshape(-1, 3)


def write_vtk(state, path, title="tideflow"):
    """Legacy ASCII unstructured grid on the mesh carrying the velocity.

    Points are the P2 nodes; velocity is point data, the pressure is written
    as its P1 part (point data, midpoints averaged) and P0 part (cell data),
    together with the phase labels.
    """
    tri = state.U_mesh.tri
    nv = tri.n_vertices
    pts = np.r_[tri.vertices, tri.edge_midpoints()]
    cells = subdivided_cells(tri)
    parent = np.repeat(np.arange(tri.n_triangles), 4)
    U = np.asarray(state.U, float).reshape(-1, 2)
    same = (state.P_mesh.tri.n_vertices == nv
            and np.array_equal(state.P_mesh.tri.triangles, tri.triangles))
    with _open(path) as f:
        w = f.write
        w("# vtk DataFile Version 3.0\n")
        w(f"{title} t={_fmt(state.t)}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        w(f"POINTS {len(pts)} double\n")
        for x, y in pts:
            w(f"{_fmt(x)} {_fmt(y)} 0\n")
        w(f"CELLS {len(cells)} {4 * len(cells)}\n")
        for c in cells:
            w(f"3 {c[0]} {c[1]} {c[2]}\n")
        w(f"CELL_TYPES {len(cells)}\n")
        w("5\n" * len(cells))
        w(f"POINT_DATA {len(pts)}\n")
        w("VECTORS velocity double\n")
        for ux, uy in U:
            w(f"{_fmt(ux)} {_fmt(uy)} 0\n")
        if same:
            p = CompositePressure.from_vector(state.P, nv)
            p1 = np.r_[p.p1, 0.5 * (p.p1[tri.edges[:, 0]] + p.p1[tri.edges[:, 1]])]
            w("SCALARS pressure_p1 double 1\nLOOKUP_TABLE default\n")
            w("".join(f"{_fmt(v)}\n" for v in p1))
        w(f"CELL_DATA {len(cells)}\n")
        w("SCALARS phase int 1\nLOOKUP_TABLE default\n")
        w("".join(f"{int(v)}\n" for v in state.U_mesh.labels[parent]))
        if same:
            w("SCALARS pressure_p0 double 1\nLOOKUP_TABLE default\n")
            w("".join(f"{_fmt(v)}\n" for v in p.p0[parent]))
    return Path(path)


def write_series_csv(series, path):
    """RFC-4180 CSV with header t, z_c, sphericity, V_c, rel_area, n_elements, n_remesh."""
    with _open(path) as f:
        wr = csv.writer(f, lineterminator="\r\n")
        wr.writerow(series.COLUMNS)
        for row in series.rows():
            wr.writerow([_fmt(v) for v in row[:5]] + [int(row[5]), int(row[6])])
    return Path(path)


def read_series_csv(path):
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    header, data = rows[0], rows[1:]
    return {h: np.array([float(r[k]) for r in data]) for k, h in enumerate(header)}


TABLE_COLUMNS = ("J", "interface", "L2_velocity", "EOC", "H1_velocity", "L2_pressure", "EOC",
                 "CPU_s")


def _eoc_str(v):
    return "-" if v is None or not math.isfinite(v) else f"{v:.2f}"


def format_error_table(reports):
    """Plain-text table, one row per level."""
    lines = ["  ".join(f"{c:>12}" for c in TABLE_COLUMNS)]
    for r in reports:
        cells = [f"{r.J:>12d}", f"{r.interface:12.5e}", f"{r.velocity_l2:12.5e}",
                 f"{_eoc_str(r.eoc_velocity):>12}", f"{r.velocity_h1:12.5e}",
                 f"{r.pressure_l2:12.5e}", f"{_eoc_str(r.eoc_pressure):>12}", f"{r.cpu:12.1f}"]
        lines.append("  ".join(cells))
    return "\n".join(lines) + "\n"


def write_error_table(reports, path):
    """Error table as CSV (same column order as the text table)."""
    with _open(path) as f:
        wr = csv.writer(f, lineterminator="\r\n")
        wr.writerow(TABLE_COLUMNS)
        for r in reports:
            wr.writerow([r.J, _fmt(r.interface), _fmt(r.velocity_l2), _eoc_str(r.eoc_velocity),
                         _fmt(r.velocity_h1), _fmt(r.pressure_l2), _eoc_str(r.eoc_pressure),
                         f"{r.cpu:.1f}"])
    return Path(path)


def read_key_values(path):
    """Parse a ``key = value`` file; ``#`` starts a comment."""
    out = {}
    with open(path) as f:
        for n, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{n}: expected key=value, got {line!r}")
            k, v = (s.strip() for s in line.split("=", 1))
            if not k:
                raise ValueError(f"{path}:{n}: empty key")
            out[k.replace("-", "_")] = v
    return out
