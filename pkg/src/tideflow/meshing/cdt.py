"""Incremental constrained Delaunay triangulation with Ruppert refinement.

Triangles are kept in flat Python lists (vertex triples and neighbour
triples, neighbour ``k`` lying across the edge opposite vertex ``k``) because
the work is dominated by small local updates.  Points are inserted by
splitting a triangle or an edge followed by Lawson flips; constrained edges
are never flipped, so the result is the constrained Delaunay triangulation.

Segments are either *splittable* (domain boundary) or *fixed* (interface).
Refinement never places vertices on fixed segments.
"""
from __future__ import annotations

import math
from collections import deque

import numpy as np

from ..geometry import MeshError

_EPS = 1e-13
_SIN_MIN = math.sin(math.radians(22.0))


def orient(ax, ay, bx, by, cx, cy):
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _orient_tol(ax, ay, bx, by, cx, cy):
    return _EPS * (abs((bx - ax) * (cy - ay)) + abs((by - ay) * (cx - ax)))


def incircle(ax, ay, bx, by, cx, cy, dx, dy):
    """Positive when d lies strictly inside the circle through ccw a, b, c."""
    adx, ady = ax - dx, ay - dy
    bdx, bdy = bx - dx, by - dy
    cdx, cdy = cx - dx, cy - dy
    alift = adx * adx + ady * ady
    blift = bdx * bdx + bdy * bdy
    clift = cdx * cdx + cdy * cdy
    det = (alift * (bdx * cdy - cdx * bdy) + blift * (cdx * ady - adx * cdy)
           + clift * (adx * bdy - bdx * ady))
    perm = (alift * (abs(bdx * cdy) + abs(cdx * bdy)) + blift * (abs(cdx * ady) + abs(adx * cdy))
            + clift * (abs(adx * bdy) + abs(bdx * ady)))
    return det if abs(det) > 1e-12 * perm else 0.0


def circumcenter(ax, ay, bx, by, cx, cy):
    bx, by, cx, cy = bx - ax, by - ay, cx - ax, cy - ay
    d = 2.0 * (bx * cy - by * cx)
    b2, c2 = bx * bx + by * by, cx * cx + cy * cy
    return ax + (cy * b2 - by * c2) / d, ay + (bx * c2 - cx * b2) / d


class CDT:
    """Mutable constrained Delaunay triangulation over a bounding super-triangle."""

    def __init__(self, bbox_lo, bbox_hi):
        lo = np.asarray(bbox_lo, float)
        hi = np.asarray(bbox_hi, float)
        c = 0.5 * (lo + hi)
        r = 20.0 * float(np.max(hi - lo)) + 1.0
        self.x = [c[0] - 2 * r, c[0] + 2 * r, c[0]]
        self.y = [c[1] - r, c[1] - r, c[1] + 2 * r]
        self.tv = [[0, 1, 2]]
        self.tn = [[-1, -1, -1]]
        self.alive = [True]
        self.vt = [0, 0, 0]
        self.cons = {}  # (min, max) -> marker
        self.fixed = set()  # markers that may not be split
        self.last = 0
        self.n_super = 3
        self.size_tol = 1.0

    # -- basic queries ------------------------------------------------------
    def n_alive(self):
        return sum(self.alive)

    def _xy(self, v):
        return self.x[v], self.y[v]

    def is_constrained(self, a, b):
        return (a, b) in self.cons if a < b else (b, a) in self.cons

    def marker(self, a, b):
        return self.cons.get((a, b) if a < b else (b, a))

    def _set(self, t, verts, nbrs):
        self.tv[t] = verts
        self.tn[t] = nbrs
        self.alive[t] = True
        for v in verts:
            self.vt[v] = t

    def _new(self):
        self.tv.append(None)
        self.tn.append(None)
        self.alive.append(False)
        return len(self.tv) - 1

    def _replace_nbr(self, t, a, b, new):
        """In triangle t, point the neighbour across edge {a, b} to ``new``."""
        if t < 0:
            return
        tv = self.tv[t]
        for k in range(3):
            if tv[k] != a and tv[k] != b:
                self.tn[t][k] = new
                return
        raise MeshError("corrupt adjacency")

    def star(self, v):
        """All alive triangles incident to vertex v."""
        t0 = self.vt[v]
        if not self.alive[t0] or v not in self.tv[t0]:
            t0 = next(t for t in range(len(self.tv)) if self.alive[t] and v in self.tv[t])
            self.vt[v] = t0
        seen = {t0}
        stack = [t0]
        while stack:
            t = stack.pop()
            for n in self.tn[t]:
                if n >= 0 and n not in seen and v in self.tv[n]:
                    seen.add(n)
                    stack.append(n)
        return seen

    def find_edge(self, a, b):
        for t in self.star(a):
            tv = self.tv[t]
            if b in tv:
                for k in range(3):
                    if tv[k] != a and tv[k] != b:
                        return t, k
        return None

    # -- point location -----------------------------------------------------
    def locate(self, px, py, start=None, stop_at_constraints=False):
        """Walk to the triangle containing p.

        Returns ``(kind, t, k)`` with kind one of ``'in'``, ``'edge'`` (p on
        edge k of t), ``'vertex'`` (k is the vertex id), ``'out'`` (left the
        triangulation across edge k of t) or ``'blocked'`` (the walk would
        cross the constrained edge k of t).
        """
        t = self.last if start is None or not self.alive[start] else start
        if not self.alive[t]:
            t = self.alive.index(True)
        x, y, tv, tn = self.x, self.y, self.tv, self.tn
        rot = 0
        for _ in range(4 * len(tv) + 100):
            verts = tv[t]
            moved = False
            on_edge = -1
            rot = (rot + 1) % 3
            for j in range(3):
                k = (j + rot) % 3
                a, b = verts[(k + 1) % 3], verts[(k + 2) % 3]
                ax, ay, bx, by = x[a], y[a], x[b], y[b]
                o = orient(ax, ay, bx, by, px, py)
                tol = _orient_tol(ax, ay, bx, by, px, py)
                if o < -tol:
                    if stop_at_constraints and self.is_constrained(a, b):
                        return "blocked", t, k
                    n = tn[t][k]
                    if n < 0:
                        return "out", t, k
                    t = n
                    moved = True
                    break
                if o <= tol:
                    on_edge = k
            if not moved:
                self.last = t
                if on_edge >= 0:
                    for v in verts:
                        if abs(x[v] - px) <= 1e-14 * (1 + abs(px)) and abs(y[v] - py) <= 1e-14 * (1 + abs(py)):
                            return "vertex", t, v
                    return "edge", t, on_edge
                return "in", t, -1
        raise MeshError("point location did not terminate")

    # -- insertion ----------------------------------------------------------
    def add_vertex(self, px, py):
        self.x.append(float(px))
        self.y.append(float(py))
        self.vt.append(-1)
        return len(self.x) - 1

    def insert(self, px, py, start=None):
        kind, t, k = self.locate(px, py, start)
        if kind == "vertex":
            return k
        if kind == "out":
            raise MeshError("point outside triangulation")
        v = self.add_vertex(px, py)
        if kind == "in":
            stack = self._split_triangle(t, v)
        else:
            stack = self._split_edge(t, k, v)
        self._legalize_point(stack, v)
        return v

    def _split_triangle(self, t, v):
        a, b, c = self.tv[t]
        na, nb, nc = self.tn[t]
        t1, t2 = self._new(), self._new()
        self._set(t, [v, b, c], [na, t1, t2])
        self._set(t1, [v, c, a], [nb, t2, t])
        self._set(t2, [v, a, b], [nc, t, t1])
        self._replace_nbr(nb, c, a, t1)
        self._replace_nbr(nc, a, b, t2)
        self.last = t
        return [(t, 0), (t1, 0), (t2, 0)]

    def _split_edge(self, t, k, v):
        """Split the edge opposite vertex k of t by vertex v (on that edge)."""
        p = self.tv[t][k]
        q = self.tv[t][(k + 1) % 3]
        r = self.tv[t][(k + 2) % 3]
        n_rp = self.tn[t][(k + 1) % 3]
        n_pq = self.tn[t][(k + 2) % 3]
        u = self.tn[t][k]
        key = (min(q, r), max(q, r))
        mark = self.cons.pop(key, None)
        if mark is not None:
            self.cons[(min(q, v), max(q, v))] = mark
            self.cons[(min(v, r), max(v, r))] = mark
        t1 = self._new()
        if u < 0:
            # t = (p, q, r) -> (p, q, v), (p, v, r)
            self._set(t, [p, q, v], [-1, t1, n_pq])
            self._set(t1, [p, v, r], [-1, n_rp, t])
            self._replace_nbr(n_rp, r, p, t1)
            self.last = t
            return [(t, 2), (t1, 1)]
        j = next(i for i in range(3) if self.tv[u][i] != q and self.tv[u][i] != r)
        s = self.tv[u][j]
        # u = (s, r, q) ccw: edge opposite r is (q, s), opposite q is (s, r)
        n_qs, n_sr = self.tn[u][(j + 1) % 3], self.tn[u][(j + 2) % 3]
        u1 = self._new()
        self._set(t, [v, p, q], [n_pq, u1, t1])
        self._set(t1, [v, r, p], [n_rp, t, u])
        self._set(u, [v, s, r], [n_sr, t1, u1])
        self._set(u1, [v, q, s], [n_qs, u, t])
        self._replace_nbr(n_rp, r, p, t1)
        self._replace_nbr(n_qs, q, s, u1)
        self.last = t
        return [(t, 0), (t1, 0), (u, 0), (u1, 0)]

    def flip(self, t, k):
        """Flip the edge opposite vertex k of t; returns the two new triangles
        (p, q, s) and (p, s, r), both with p = old tv[t][k] at local index 0."""
        p = self.tv[t][k]
        q = self.tv[t][(k + 1) % 3]
        r = self.tv[t][(k + 2) % 3]
        n_rp = self.tn[t][(k + 1) % 3]
        n_pq = self.tn[t][(k + 2) % 3]
        u = self.tn[t][k]
        j = next(i for i in range(3) if self.tv[u][i] != q and self.tv[u][i] != r)
        s = self.tv[u][j]
        n_qs = self.tn[u][(j + 1) % 3]
        n_sr = self.tn[u][(j + 2) % 3]
        self._set(t, [p, q, s], [n_qs, u, n_pq])
        self._set(u, [p, s, r], [n_sr, n_rp, t])
        self._replace_nbr(n_qs, q, s, t)
        self._replace_nbr(n_rp, r, p, u)
        return t, u

    def _opposite(self, t, k):
        u = self.tn[t][k]
        q, r = self.tv[t][(k + 1) % 3], self.tv[t][(k + 2) % 3]
        for s in self.tv[u]:
            if s != q and s != r:
                return u, s
        raise MeshError("corrupt adjacency")

    def _legalize_point(self, stack, v):
        x, y = self.x, self.y
        while stack:
            t, k = stack.pop()
            u = self.tn[t][k]
            if u < 0:
                continue
            a, b, c = self.tv[t]
            if self.is_constrained(b if k == 0 else (c if k == 1 else a),
                                   c if k == 0 else (a if k == 1 else b)):
                continue
            _, s = self._opposite(t, k)
            if incircle(x[a], y[a], x[b], y[b], x[c], y[c], x[s], y[s]) > 0:
                t1, t2 = self.flip(t, k)
                stack.append((t1, 0))
                stack.append((t2, 0))

    def _legalize_edges(self, edges):
        """Lawson flips for arbitrary (unconstrained) edges given as vertex pairs."""
        x, y = self.x, self.y
        stack = list(edges)
        guard = 0
        while stack:
            guard += 1
            if guard > 100000 + 50 * len(self.tv):
                raise MeshError("edge legalisation did not terminate")
            a, b = stack.pop()
            if self.is_constrained(a, b):
                continue
            found = self.find_edge(a, b)
            if found is None:
                continue
            t, k = found
            if self.tn[t][k] < 0:
                continue
            p, q, r = self.tv[t][k], self.tv[t][(k + 1) % 3], self.tv[t][(k + 2) % 3]
            _, s = self._opposite(t, k)
            if incircle(x[p], y[p], x[q], y[q], x[r], y[r], x[s], y[s]) > 0:
                self.flip(t, k)
                stack.extend([(p, q), (q, s), (s, r), (r, p)])

    # -- constraints --------------------------------------------------------
    def insert_segment(self, a, b, marker):
        if a == b:
            raise MeshError("degenerate segment")
        if self.find_edge(a, b) is None:
            self._recover(a, b)
        self.cons[(min(a, b), max(a, b))] = marker

    def _crossing_edges(self, a, b):
        x, y = self.x, self.y
        ax, ay, bx, by = x[a], y[a], x[b], y[b]
        start = None
        for t in self.star(a):
            tv = self.tv[t]
            i = tv.index(a)
            q, r = tv[(i + 1) % 3], tv[(i + 2) % 3]
            oq = orient(ax, ay, bx, by, x[q], y[q])
            orr = orient(ax, ay, bx, by, x[r], y[r])
            if (abs(oq) <= _orient_tol(ax, ay, bx, by, x[q], y[q])
                    and (x[q] - ax) * (bx - ax) + (y[q] - ay) * (by - ay) > 0):
                raise MeshError(f"vertex {q} lies on segment ({a}, {b})")
            if oq < 0 < orr:
                start = (t, i)
                break
        if start is None:
            raise MeshError(f"cannot start recovery of segment ({a}, {b})")
        t, i = start
        crossing = []
        for _ in range(len(self.tv) + 10):
            q, r = self.tv[t][(i + 1) % 3], self.tv[t][(i + 2) % 3]
            if self.is_constrained(q, r):
                raise MeshError(f"segment ({a}, {b}) crosses another segment")
            crossing.append((q, r))
            u, s = self._opposite(t, i)
            if s == b:
                return crossing
            o = orient(ax, ay, bx, by, x[s], y[s])
            if abs(o) <= _orient_tol(ax, ay, bx, by, x[s], y[s]):
                raise MeshError(f"vertex {s} lies on segment ({a}, {b})")
            # s right of ab: cross (s, r), opposite q; left: cross (q, s)
            t, i = u, self.tv[u].index(q if o < 0 else r)
        raise MeshError("segment recovery walk did not terminate")

    def _recover(self, a, b):
        x, y = self.x, self.y
        ax, ay, bx, by = x[a], y[a], x[b], y[b]
        queue = deque(self._crossing_edges(a, b))
        new_edges = []
        guard = 0
        while queue:
            guard += 1
            if guard > 100 * (len(queue) + 10) ** 2:
                raise MeshError(f"segment ({a}, {b}) recovery stalled")
            q, r = queue.popleft()
            t, k = self.find_edge(q, r)
            p = self.tv[t][k]
            _, s = self._opposite(t, k)
            o1 = orient(x[p], y[p], x[s], y[s], x[q], y[q])
            o2 = orient(x[p], y[p], x[s], y[s], x[r], y[r])
            if o1 * o2 >= 0:
                queue.append((q, r))
                continue
            self.flip(t, k)
            if {p, s} == {a, b}:
                continue
            op = orient(ax, ay, bx, by, x[p], y[p])
            os_ = orient(ax, ay, bx, by, x[s], y[s])
            if p not in (a, b) and s not in (a, b) and op * os_ < 0:
                queue.append((p, s))
            else:
                new_edges.append((p, s))
        self.cons[(min(a, b), max(a, b))] = -1
        self._legalize_edges(new_edges)
        del self.cons[(min(a, b), max(a, b))]

    # -- region handling ----------------------------------------------------
    def remove_outside(self, hole_points=()):
        """Delete triangles outside the region bounded by splittable segments."""
        dead = set()
        seeds = [t for t in range(len(self.tv)) if self.alive[t]
                 and any(v < self.n_super for v in self.tv[t])]
        for hx, hy in hole_points:
            kind, t, _ = self.locate(hx, hy)
            seeds.append(t)
        stack = list(seeds)
        dead.update(seeds)
        while stack:
            t = stack.pop()
            tv = self.tv[t]
            for k in range(3):
                n = self.tn[t][k]
                if n < 0 or n in dead:
                    continue
                m = self.marker(tv[(k + 1) % 3], tv[(k + 2) % 3])
                if m is not None and m not in self.fixed:
                    continue
                dead.add(n)
                stack.append(n)
        for t in dead:
            self.alive[t] = False
        for t in range(len(self.tv)):
            if self.alive[t]:
                self.tn[t] = [n if n >= 0 and self.alive[n] else -1 for n in self.tn[t]]
                for v in self.tv[t]:
                    self.vt[v] = t
        self.last = next(t for t in range(len(self.tv)) if self.alive[t])

    # -- refinement ---------------------------------------------------------
    def _encroached_by(self, a, b, px, py):
        x, y = self.x, self.y
        dx1, dy1 = x[a] - px, y[a] - py
        dx2, dy2 = x[b] - px, y[b] - py
        l2 = (x[a] - x[b]) ** 2 + (y[a] - y[b]) ** 2
        return dx1 * dx2 + dy1 * dy2 < -1e-10 * l2

    def _segment_encroached(self, a, b):
        found = self.find_edge(a, b)
        if found is None:
            return False
        t, k = found
        if self._encroached_by(a, b, self.x[self.tv[t][k]], self.y[self.tv[t][k]]):
            return True
        u = self.tn[t][k]
        if u >= 0:
            _, s = self._opposite(t, k)
            return self._encroached_by(a, b, self.x[s], self.y[s])
        return False

    def split_segment(self, a, b):
        found = self.find_edge(a, b)
        t, k = found
        mx = 0.5 * (self.x[a] + self.x[b])
        my = 0.5 * (self.y[a] + self.y[b])
        v = self.add_vertex(mx, my)
        stack = self._split_edge(t, k, v)
        self._legalize_point(stack, v)
        return v

    def _cavity_segments(self, t0, px, py):
        """Constrained edges bounding the Delaunay cavity of p (read-only)."""
        x, y = self.x, self.y
        seen = {t0}
        stack = [t0]
        segs = []
        verts = set(self.tv[t0])
        while stack:
            t = stack.pop()
            tv = self.tv[t]
            for k in range(3):
                a, b = tv[(k + 1) % 3], tv[(k + 2) % 3]
                if self.is_constrained(a, b):
                    segs.append((a, b))
                    continue
                n = self.tn[t][k]
                if n < 0 or n in seen:
                    continue
                na, nb, nc = self.tv[n]
                if incircle(x[na], y[na], x[nb], y[nb], x[nc], y[nc], px, py) > 0:
                    seen.add(n)
                    stack.append(n)
                    verts.update(self.tv[n])
        return segs, verts

    def _try_insert(self, px, py, t_start, min_dist):
        """Insert p unless it encroaches segments.

        Returns ('ok', v) | ('split', [segments]) | ('reject', None).
        """
        kind, t, k = self.locate(px, py, t_start, stop_at_constraints=True)
        if kind in ("blocked", "out"):
            tv = self.tv[t]
            a, b = tv[(k + 1) % 3], tv[(k + 2) % 3]
            m = self.marker(a, b)
            if m is not None and m not in self.fixed:
                return "split", [(a, b)]
            return "reject", None
        if kind == "vertex":
            return "reject", None
        if kind == "edge":
            tv = self.tv[t]
            a, b = tv[(k + 1) % 3], tv[(k + 2) % 3]
            if self.is_constrained(a, b):
                m = self.marker(a, b)
                return ("split", [(a, b)]) if m not in self.fixed else ("reject", None)
        segs, cav = self._cavity_segments(t, px, py)
        for v in cav:
            if (self.x[v] - px) ** 2 + (self.y[v] - py) ** 2 < min_dist ** 2:
                return "reject", None
        enc = [(a, b) for a, b in segs if self._encroached_by(a, b, px, py)]
        if enc:
            if any(self.marker(a, b) in self.fixed for a, b in enc):
                return "reject", None
            return "split", enc
        v = self.add_vertex(px, py)
        stack = self._split_triangle(t, v) if kind == "in" else self._split_edge(t, k, v)
        self._legalize_point(stack, v)
        return "ok", v

    def _quality(self, t, size):
        x, y = self.x, self.y
        a, b, c = self.tv[t]
        la = (x[b] - x[c]) ** 2 + (y[b] - y[c]) ** 2
        lb = (x[c] - x[a]) ** 2 + (y[c] - y[a]) ** 2
        lc = (x[a] - x[b]) ** 2 + (y[a] - y[b]) ** 2
        area2 = abs(orient(x[a], y[a], x[b], y[b], x[c], y[c]))
        lmin = min(la, lb, lc)
        # sin(min angle) = area2 / (product of the two longer edges)
        s = sorted((la, lb, lc))
        sin_min = area2 / math.sqrt(s[1] * s[2]) if s[1] * s[2] > 0 else 0.0
        cx, cy = (x[a] + x[b] + x[c]) / 3.0, (y[a] + y[b] + y[c]) / 3.0
        h = size(cx, cy)
        # size test ignores fixed segments, which cannot be shortened
        lmax = 0.0
        for (p, q, l2) in ((b, c, la), (c, a, lb), (a, b, lc)):
            if self.marker(p, q) not in self.fixed or self.marker(p, q) is None:
                lmax = max(lmax, l2)
        return sin_min < _SIN_MIN, lmax > (self.size_tol * h) ** 2, lmin, h

    def refine(self, size, max_triangles=1_000_000, size_tol=1.0):
        """Ruppert refinement: min angle 22 degrees, edge lengths below ``size``."""
        x, y = self.x, self.y
        self.size_tol = size_tol
        # split encroached splittable segments first
        changed = True
        while changed:
            changed = False
            for (a, b), m in list(self.cons.items()):
                if m in self.fixed or (min(a, b), max(a, b)) not in self.cons:
                    continue
                if self._segment_encroached(a, b):
                    self.split_segment(a, b)
                    changed = True
        queue = deque((t, tuple(self.tv[t])) for t in range(len(self.tv)) if self.alive[t])
        skipped = set()
        while queue:
            if len(self.tv) > 3 * max_triangles:
                raise MeshError(f"refinement exceeded the element budget ({max_triangles})")
            t, verts = queue.popleft()
            if not self.alive[t] or tuple(self.tv[t]) != verts or verts in skipped:
                continue
            bad_angle, too_big, lmin, h = self._quality(t, size)
            if not (bad_angle or too_big):
                continue
            a, b, c = verts
            n_before = len(self.tv)
            cands = [(circumcenter(x[a], y[a], x[b], y[b], x[c], y[c]), 1e-3 * math.sqrt(lmin))]
            for p, q in ((b, c), (c, a), (a, b)):
                if self.marker(p, q) in self.fixed:
                    # off-edge Steiner point: apex of the equilateral triangle
                    # on the fixed segment, kept clear of existing vertices
                    mx, my = 0.5 * (x[p] + x[q]), 0.5 * (y[p] + y[q])
                    dx, dy = x[q] - x[p], y[q] - y[p]
                    s3 = 0.5 * math.sqrt(3.0)
                    cands.append(((mx - s3 * dy, my + s3 * dx), 0.6 * math.hypot(dx, dy)))
            done = False
            for (px, py), clearance in cands:
                status, payload = self._try_insert(px, py, t, clearance)
                if status == "ok":
                    done = True
                    break
                if status == "split":
                    for sa, sb in payload:
                        if self.is_constrained(sa, sb):
                            self.split_segment(sa, sb)
                    done = True
                    queue.append((t, verts))
                    break
            if not done:
                skipped.add(verts)
                continue
            fresh = set(range(n_before, len(self.tv)))
            fresh.update(self._touched_recent())
            for nt in fresh:
                if self.alive[nt]:
                    queue.append((nt, tuple(self.tv[nt])))
            if self.n_alive_fast() > max_triangles:
                raise MeshError(f"refinement exceeded the element budget ({max_triangles})")

    def _touched_recent(self):
        # triangles around the most recent vertex (flips reuse slots)
        v = len(self.x) - 1
        return self.star(v) if self.vt[v] >= 0 else ()

    def n_alive_fast(self):
        return len(self.tv) - self.alive.count(False)

    # -- export -------------------------------------------------------------
    def export(self):
        """Compact arrays: (vertices, triangles, old->new vertex map, segments)."""
        tris = [self.tv[t] for t in range(len(self.tv)) if self.alive[t]]
        used = sorted({v for tv in tris for v in tv})
        remap = -np.ones(len(self.x), dtype=np.int64)
        remap[used] = np.arange(len(used))
        verts = np.c_[np.asarray(self.x)[used], np.asarray(self.y)[used]]
        tri = remap[np.asarray(tris, dtype=np.int64)]
        segs = {(int(remap[a]), int(remap[b])): m for (a, b), m in self.cons.items()
                if remap[a] >= 0 and remap[b] >= 0}
        return verts, tri, remap, segs
