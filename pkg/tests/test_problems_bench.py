import math

import numpy as np
import pytest

from tideflow.bench import (ErrorReport, attach_eoc, bubble_quantities, eoc, interface_error,
                            pressure_error, sphericity, velocity_errors)
from tideflow.fe import P2Space
from tideflow.geometry import Phases, inner_measures, polygon_area
from tideflow.io import format_error_table
from tideflow.meshing import DomainSpec, fitted_mesh
from tideflow.problems import (ExactSolution, circle, expanding_bubble, n_steps,
                               rising_bubble)
from tideflow.schemes import initial_state

UNIT = Phases(1.0, 1.0, 1.0, 1.0)


def _sol1(alpha=0.15, phases=UNIT, gamma=1.0):
    return ExactSolution("linear", alpha, 0.5, phases, gamma, 4.0)


def test_sol1_pressure_levels():
    p_in, p_out = _sol1().pressure_levels(0.0)
    assert p_in == pytest.approx(2 * (1 - math.pi / 16), abs=1e-12)
    assert p_in == pytest.approx(1.60730, abs=1e-5)
    assert p_out == pytest.approx(-0.39270, abs=1e-5)
    # mean zero over the domain
    area = math.pi / 4
    assert p_in * area + p_out * (4 - area) == pytest.approx(0.0, abs=1e-12)


def test_static_bubble_jump():
    ex = _sol1(alpha=0.0, gamma=3.0)
    z = np.random.default_rng(0).normal(size=(5, 2))
    assert np.all(ex.velocity(z) == 0.0)
    p_in, p_out = ex.pressure_levels(0.7)
    assert p_in - p_out == pytest.approx(3.0 / 0.5, abs=1e-12)


def test_sol2_radius_and_velocity():
    ex = ExactSolution("source", 0.15, 0.5, UNIT, 1.0, 4 - 4 / 9, 4 / 9)
    assert ex.radius(1.0) == pytest.approx(math.sqrt(0.55), abs=1e-15)
    assert ex.radius(1.0) == pytest.approx(0.741620, abs=1e-6)
    assert np.allclose(ex.velocity(np.array([1.0, 0.0])), [0.15, 0.0], atol=1e-15)
    with pytest.raises(ValueError):
        ex.velocity(np.zeros(2))


@pytest.mark.parametrize("kind", ["linear", "source"])
def test_exact_velocity_gradient(kind):
    ex = ExactSolution(kind, 0.15, 0.5, UNIT, 1.0, 4.0)
    z = np.array([[0.6, -0.4], [0.5, 0.7]])
    eps = 1e-6
    for c in range(2):
        dz = np.zeros(2)
        dz[c] = eps
        fd = (ex.velocity(z + dz) - ex.velocity(z - dz)) / (2 * eps)
        assert np.allclose(ex.velocity_gradient(z)[:, :, c], fd, atol=1e-8)


def test_source_velocity_divergence_free():
    ex = ExactSolution("source", 0.15, 0.5, UNIT, 1.0, 4.0)
    z = np.random.default_rng(1).uniform(0.4, 1.0, (10, 2))
    assert np.abs(np.trace(ex.velocity_gradient(z), axis1=-2, axis2=-1)).max() <= 1e-14


def test_jump_identity_sol1():
    ph = Phases(rho_plus=2.0, rho_minus=1.0, mu_plus=3.0, mu_minus=0.5)
    ex = _sol1(phases=ph, gamma=1.3)
    dmu = ph.mu_plus - ph.mu_minus
    for t in np.linspace(0.0, 2.0, 20):
        p_in, p_out = ex.pressure_levels(t)
        kappa = -1.0 / ex.radius(t)
        # [p] = p_+ - p_-, outer minus inner
        assert (p_out - p_in) - ex.gamma * kappa - 2 * ex.alpha * dmu == pytest.approx(0.0, abs=1e-12)


def test_eoc_example():
    e = eoc(3.05157e-1, 1.57053e-1, 1 / 32, 1 / 64)
    assert f"{e:.2f}" == "0.96"
    assert math.isnan(eoc(0.0, 1.0, 1.0, 0.5))
    reps = attach_eoc([ErrorReport(32, 1e-3, 1e-2, 1e-1, 3.05157e-1),
                       ErrorReport(64, 2.5e-4, 5e-3, 5e-2, 1.57053e-1)])
    assert reps[1].eoc_pressure == pytest.approx(e)
    assert reps[1].eoc_interface == pytest.approx(2.0)
    assert "0.96" in format_error_table(reps).splitlines()[2]


def test_n_steps():
    assert n_steps(1.0, 1e-3) == 1000
    assert n_steps(0.8, 1e-3) == 800
    assert n_steps(1.0, 6.4e-2) == 15
    assert n_steps(0.0, 1e-2) == 0


def test_sphericity_values():
    poly = circle((0, 0), 1.0, 64)
    length = np.linalg.norm(np.roll(poly, -1, axis=0) - poly, axis=1).sum()
    s = sphericity(abs(polygon_area(poly)), length)
    assert s >= 0.9995
    assert s <= 1.0
    assert sphericity(1.0, 4.0) == pytest.approx(math.sqrt(math.pi) / 2, abs=1e-15)
    assert sphericity(math.pi, 2 * math.pi) == pytest.approx(1.0, abs=1e-15)


def test_interface_error_exact_points():
    ex = _sol1()
    t = 0.4
    pts = circle((0, 0), ex.radius(t), 48)
    assert interface_error(pts, ex, t) <= 1e-15
    assert interface_error(1.01 * pts, ex, t) == pytest.approx(0.01 * ex.radius(t), rel=1e-9)


def test_velocity_error_of_interpolant(tiny_fm):
    ex = _sol1()
    U = P2Space(tiny_fm.tri).interpolate(lambda z: ex.velocity(z, 0.0))
    l2, h1 = velocity_errors(U, tiny_fm.tri, ex, 0.0)
    assert l2 <= 1e-14 and h1 <= 1e-13


def test_velocity_error_known_value(unit_grid):
    ex = _sol1(alpha=1.0)
    U = np.zeros(2 * (unit_grid.n_vertices + unit_grid.n_edges))
    l2, h1 = velocity_errors(U, unit_grid, ex, 0.0)
    # ||z||^2 over (0,1)^2 = 2/3, ||grad z||^2 = 2
    assert l2 == pytest.approx(math.sqrt(2 / 3), rel=1e-12)
    assert h1 == pytest.approx(math.sqrt(2 / 3 + 2), rel=1e-12)


def test_pressure_error_disk_clipping(circle_fm):
    ex = _sol1()
    p_in, p_out = ex.pressure_levels(0.0)
    nv = circle_fm.tri.n_vertices
    P = np.r_[np.full(nv, p_out), np.zeros(circle_fm.tri.n_triangles)]
    err = pressure_error(P, circle_fm.tri, ex, 0.0)
    assert err == pytest.approx((p_in - p_out) * math.sqrt(math.pi * 0.25), rel=1e-6)
    # the inside level on the discrete inner phase leaves only the sliver error
    P0 = np.where(circle_fm.labels < 0, p_in - p_out, 0.0)
    sliver = pressure_error(np.r_[np.full(nv, p_out), P0], circle_fm.tri, ex, 0.0)
    gap = math.pi * 0.25 - abs(polygon_area(circle_fm.interface_points()))
    assert sliver == pytest.approx((p_in - p_out) * math.sqrt(gap), rel=1e-3)


def test_pressure_error_polygonal_mean(circle_fm):
    ex = _sol1()
    area = abs(polygon_area(circle_fm.interface_points()))
    nv = circle_fm.tri.n_vertices
    P = np.zeros(nv + circle_fm.tri.n_triangles)
    e_exact = pressure_error(P, circle_fm.tri, ex, 0.0)
    e_poly = pressure_error(P, circle_fm.tri, ex, 0.0, inner_area=area)
    assert e_poly != e_exact
    assert e_poly == pytest.approx(e_exact, rel=1e-2)


def test_bubble_quantities_initial():
    pb = rising_bubble(1, 64)
    st = initial_state(pb)
    zc, sph, vc, rel = bubble_quantities(st)
    assert zc == pytest.approx(0.5, abs=1e-12)
    assert vc == 0.0
    assert 0.9995 <= sph <= 1.0
    assert rel == 1.0


def test_rigid_translation_of_bubble():
    dom = DomainSpec(outer=(0.0, 0.0, 1.0, 2.0), h_char=2 * math.pi * 0.25 / 32)
    q = circle((0.5, 0.5), 0.25, 32)
    s = 0.375
    a = fitted_mesh(dom, q)
    b = fitted_mesh(dom, q + [0.0, s])
    qa = initial_state(rising_bubble(1, 32), a)
    qb = initial_state(rising_bubble(1, 32), b)
    za, sa, _, _ = bubble_quantities(qa)
    zb, sb, _, _ = bubble_quantities(qb)
    assert zb - za == pytest.approx(s, abs=1e-12)
    assert sb == pytest.approx(sa, abs=1e-14)
    assert inner_measures(a)[0] == pytest.approx(inner_measures(b)[0], rel=1e-13)


def test_expanding_problem_data():
    pb = expanding_bubble("linear", 32)
    assert pb.gamma0.shape == (32, 2)
    assert pb.h_char == pytest.approx(2 * math.pi * 0.5 / 32)
    assert np.allclose(pb.fdiv(np.zeros((3, 2)), 0.0), 0.3)
    pb2 = expanding_bubble("source", 32)
    assert pb2.domain.hole == (-1 / 3, -1 / 3, 1 / 3, 1 / 3)
    assert pb2.fdiv is None
    with pytest.raises(ValueError):
        expanding_bubble("vortex", 32)
