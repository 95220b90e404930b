"""Gmsh MSH 2.2 ASCII reader/writer for fitted meshes.

Physical tags: surfaces 1 (outer phase) and 2 (inner phase); lines 11
(Dirichlet boundary), 12 (slip boundary) and 20 (interface).
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ..geometry import (DIRICHLET, INTERFACE, MINUS, PLUS, SLIP, FittedMesh, MeshError,
                        Triangulation, build_fitted_topology)

SURFACE_PLUS = 1
SURFACE_MINUS = 2


class MshData(NamedTuple):
    tri: Triangulation
    loop: np.ndarray  # ordered interface vertex ids (empty without interface)
    labels: np.ndarray  # +1 / -1 per triangle


def save_msh(mesh, path):
    """Write a :class:`Triangulation` or :class:`FittedMesh`."""
    if isinstance(mesh, FittedMesh):
        tri, labels = mesh.tri, mesh.labels
        loop = mesh.interface.vertex_ids if mesh.interface is not None else np.zeros(0, int)
    else:
        tri, labels, loop = mesh, np.full(mesh.n_triangles, PLUS), np.zeros(0, int)
    lines = []
    bnd = np.flatnonzero(tri.edge_tris[:, 1] < 0)
    for k in bnd:
        t = tri.edge_tris[k, 0]
        i = int(np.flatnonzero(tri.tri_edges[t] == k)[0])
        a, b = tri.triangles[t, (i + 1) % 3], tri.triangles[t, (i + 2) % 3]
        lines.append((int(tri.edge_markers[k]), a, b))
    for a, b in zip(loop, np.roll(loop, -1)):
        lines.append((INTERFACE, a, b))
    with open(path, "w") as f:
        f.write("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n")
        f.write("$PhysicalNames\n5\n")
        f.write(f'1 {DIRICHLET} "dirichlet"\n1 {SLIP} "slip"\n1 {INTERFACE} "interface"\n')
        f.write(f'2 {SURFACE_PLUS} "outer_phase"\n2 {SURFACE_MINUS} "inner_phase"\n')
        f.write("$EndPhysicalNames\n$Nodes\n")
        f.write(f"{tri.n_vertices}\n")
        for i, (x, y) in enumerate(tri.vertices, start=1):
            f.write(f"{i} {x:.17g} {y:.17g} 0\n")
        f.write("$EndNodes\n$Elements\n")
        f.write(f"{len(lines) + tri.n_triangles}\n")
        eid = 1
        for tag, a, b in lines:
            f.write(f"{eid} 1 2 {tag} {tag} {a + 1} {b + 1}\n")
            eid += 1
        for t, (a, b, c) in enumerate(tri.triangles):
            tag = SURFACE_MINUS if labels[t] == MINUS else SURFACE_PLUS
            f.write(f"{eid} 2 2 {tag} {tag} {a + 1} {b + 1} {c + 1}\n")
            eid += 1
        f.write("$EndElements\n")


def _sections(text):
    out = {}
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        s = lines[i].strip()
        if s.startswith("$") and not s.startswith("$End"):
            name = s[1:]
            j = i + 1
            while j < len(lines) and lines[j].strip() != f"$End{name}":
                j += 1
            if j == len(lines):
                raise MeshError(f"unterminated section ${name}")
            out[name] = lines[i + 1:j]
            i = j
        i += 1
    return out


def _order_loop(segs):
    if not segs:
        return np.zeros(0, dtype=np.int64)
    nxt = {}
    for a, b in segs:
        if a in nxt:
            raise MeshError("interface lines do not form a simple closed loop")
        nxt[a] = b
    start = segs[0][0]
    loop = [start]
    v = nxt[start]
    while v != start:
        loop.append(v)
        if v not in nxt or len(loop) > len(segs):
            raise MeshError("interface lines do not form a simple closed loop")
        v = nxt[v]
    if len(loop) != len(segs):
        raise MeshError("interface lines form more than one loop")
    return np.asarray(loop, dtype=np.int64)


def load_msh(path) -> MshData:
    with open(path) as f:
        text = f.read()
    sec = _sections(text)
    if "MeshFormat" not in sec:
        raise MeshError("missing $MeshFormat section")
    version = sec["MeshFormat"][0].split()[0]
    if not version.startswith("2.2"):
        raise MeshError(f"unsupported MSH version {version}")
    if sec["MeshFormat"][0].split()[1] != "0":
        raise MeshError("binary MSH files are not supported")
    node_lines = sec.get("Nodes")
    if not node_lines:
        raise MeshError("missing $Nodes section")
    n = int(node_lines[0])
    ids = np.empty(n, dtype=np.int64)
    xy = np.empty((n, 2))
    for k, line in enumerate(node_lines[1:n + 1]):
        p = line.split()
        ids[k] = int(p[0])
        xy[k] = float(p[1]), float(p[2])
    index = {int(i): k for k, i in enumerate(ids)}
    tris, labels, bmarks, iface = [], [], {}, []
    elem_lines = sec.get("Elements")
    if not elem_lines:
        raise MeshError("missing $Elements section")
    for line in elem_lines[1:int(elem_lines[0]) + 1]:
        p = [int(v) for v in line.split()]
        etype, ntags = p[1], p[2]
        if ntags < 1:
            raise MeshError(f"element {p[0]} has no physical tag")
        tag = p[3]
        nodes = [index[v] for v in p[3 + ntags:]]
        if etype == 2:
            if tag not in (SURFACE_PLUS, SURFACE_MINUS):
                raise MeshError(f"unknown surface tag {tag}")
            tris.append(nodes)
            labels.append(MINUS if tag == SURFACE_MINUS else PLUS)
        elif etype == 1:
            a, b = nodes
            if tag in (DIRICHLET, SLIP):
                bmarks[(min(a, b), max(a, b))] = tag
            elif tag == INTERFACE:
                iface.append((a, b))
            else:
                raise MeshError(f"unknown line tag {tag}")
        elif etype == 15:
            continue  # points
        else:
            raise MeshError(f"unsupported element type {etype}")
    if not tris:
        raise MeshError("no triangles in mesh file")
    tris = np.asarray(tris, dtype=np.int64)
    # enforce counter-clockwise orientation
    p = xy[tris]
    area = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    flip = area < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    tri = Triangulation(xy, tris, bmarks)
    return MshData(tri, _order_loop(iface), np.asarray(labels, dtype=np.int64))


def load_fitted(path, phases=None) -> FittedMesh:
    """Load a mesh file and attach its interface; labels must match the tags."""
    data = load_msh(path)
    fm = build_fitted_topology(data.tri, data.loop, phases)
    if data.loop.size and not np.array_equal(fm.labels, data.labels):
        raise MeshError("surface tags disagree with the interface topology")
    return fm
