import math

import numpy as np
import pytest

from tideflow.geometry import (MINUS, PLUS, MeshError, Triangulation, build_fitted_topology,
                               inner_measures, min_angle, needs_remesh, polygon_area)
from tideflow.meshing import DomainSpec, fitted_mesh
from tideflow.problems import circle

from conftest import grid_mesh

EQUILATERAL = Triangulation([[0, 0], [1, 0], [0.5, math.sqrt(3) / 2]], [[0, 1, 2]])
SLIVER = Triangulation([[0, 0], [1, 0], [0.5, 0.01]], [[0, 1, 2]])


def _inner_square_loop(n=4):
    """Vertex ids of the square [1, 3]^2 on a 4 x 4 grid, along grid edges."""
    vid = lambda i, j: j * (n + 1) + i  # noqa: E731
    pts = [(1, 1), (2, 1), (3, 1), (3, 2), (3, 3), (2, 3), (1, 3), (1, 2)]
    return [vid(i, j) for i, j in pts]


def test_topology_counts(unit_grid):
    tri = unit_grid
    assert tri.n_edges == tri.n_vertices + tri.n_triangles - 1  # Euler, one hole-free region
    inner = tri.edge_tris[:, 1] >= 0
    # every interior edge has two triangles, boundary edges one
    assert np.all(tri.edge_tris[inner] >= 0)
    assert len(tri.boundary_edges) == 4 * 8
    assert np.all(tri.areas() > 0)


def test_neighbors_are_symmetric(unit_grid):
    tri = unit_grid
    for t in range(tri.n_triangles):
        for k in range(3):
            n = tri.neighbors[t, k]
            if n >= 0:
                assert t in tri.neighbors[n]


def test_negative_area_rejected():
    with pytest.raises(MeshError):
        Triangulation([[0, 0], [1, 0], [0, 1]], [[0, 2, 1]])


def test_inscribed_square_labels():
    tri = grid_mesh(4)
    fm = build_fitted_topology(tri, _inner_square_loop())
    inside = np.all((tri.barycentres() > 1 / 4) & (tri.barycentres() < 3 / 4), axis=1)
    assert np.all(fm.labels[inside] == MINUS)
    assert np.all(fm.labels[~inside] == PLUS)


def test_normals_point_into_outer_phase():
    tri = grid_mesh(4)
    fm = build_fitted_topology(tri, _inner_square_loop())
    q = fm.interface_points()
    mid = 0.5 * (q + np.roll(q, -1, axis=0))
    nu = fm.interface_normals()
    assert np.allclose(np.hypot(*nu.T), 1.0, atol=1e-12)
    # centre of the inner square is (0.5, 0.5): normals point away from it
    assert np.all(np.einsum("ij,ij->i", nu, mid - 0.5) > 0)


def test_loop_not_fitted():
    tri = grid_mesh(4)
    loop = _inner_square_loop()
    loop[1] = 4 * 5 + 4  # far corner: (1,1)-(4,4) is not an edge
    with pytest.raises(MeshError, match="not fitted"):
        build_fitted_topology(tri, loop)


def test_loop_must_separate():
    tri = grid_mesh(2)
    with pytest.raises(MeshError):
        build_fitted_topology(tri, [0, 1, 4])  # touches the boundary


def test_circle_inner_area_matches_shoelace(circle_fm):
    area, _ = inner_measures(circle_fm)
    ref = polygon_area(circle((0, 0), 0.5, 32))
    assert abs(area - ref) <= 0.01 * ref


def test_phase_areas_sum_to_domain(circle_fm):
    a = circle_fm.tri.areas()
    total = a[circle_fm.labels == PLUS].sum() + a[circle_fm.labels == MINUS].sum()
    assert total == pytest.approx(4.0, rel=1e-12)


def test_min_angle_examples():
    assert min_angle(EQUILATERAL) == pytest.approx(60.0, abs=1e-10)
    right = Triangulation([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    assert min_angle(right) == pytest.approx(45.0, abs=1e-10)
    assert min_angle(SLIVER) == pytest.approx(math.degrees(math.atan(0.02)), abs=1e-10)


def test_min_angle_law_of_cosines(circle_fm):
    v = circle_fm.tri.vertices[circle_fm.tri.triangles]
    best = 180.0
    for i in range(3):
        a = np.linalg.norm(v[:, (i + 1) % 3] - v[:, (i + 2) % 3], axis=1)
        b = np.linalg.norm(v[:, i] - v[:, (i + 1) % 3], axis=1)
        c = np.linalg.norm(v[:, i] - v[:, (i + 2) % 3], axis=1)
        ang = np.degrees(np.arccos((b ** 2 + c ** 2 - a ** 2) / (2 * b * c)))
        best = min(best, ang.min())
    assert min_angle(circle_fm.tri) == pytest.approx(best, abs=1e-10)


def test_min_angle_rigid_motion_invariant(circle_fm):
    tri = circle_fm.tri
    th = 0.7
    R = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    moved = tri.moved(tri.vertices @ R.T + np.array([3.0, -2.0]))
    assert min_angle(moved) == pytest.approx(min_angle(tri), abs=1e-10)


def test_needs_remesh():
    eq = grid_mesh(2)  # right isosceles, 45 degrees
    assert not needs_remesh(EQUILATERAL, 20)
    assert not needs_remesh(eq, 20)
    assert needs_remesh(SLIVER, 20)
    # a triangle with a 20 degree corner exactly
    t = math.radians(20.0)
    exact = Triangulation([[0, 0], [1, 0], [math.cos(t), math.sin(t)]], [[0, 1, 2]])
    assert min_angle(exact) == pytest.approx(20.0, abs=1e-10)
    assert needs_remesh(exact, min_angle(exact))


def test_inner_measures_polygon_perimeter():
    spec = DomainSpec(outer=(-1, -1, 1, 1), h_char=0.05)
    fm = fitted_mesh(spec, circle((0, 0), 0.25, 64))
    _, length = inner_measures(fm)
    assert length == pytest.approx(64 * 0.5 * math.sin(math.pi / 64), rel=1e-12)
    assert length == pytest.approx(1.570166, abs=1e-6)


def test_inner_measures_square():
    fm = fitted_mesh(DomainSpec(outer=(-1, -1, 2, 2), h_char=0.5),
                     np.array([[0, 0], [1, 0], [1, 1], [0, 1.0]]))
    assert inner_measures(fm) == pytest.approx((1.0, 4.0), rel=1e-12)


def test_no_interface_measures():
    tri = grid_mesh(2)
    assert inner_measures(build_fitted_topology(tri, [])) == (0.0, 0.0)
