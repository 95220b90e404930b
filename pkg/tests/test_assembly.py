import numpy as np
import pytest
from scipy.integrate import dblquad

from tideflow.assembly import (continuity_rhs, convection_matrix, dirichlet_flux, load_vector,
                               mass_matrix, pressure_matrix, velocity_block,
                               velocity_constraints, viscous_matrix)
from tideflow.fe import P2Space, p2_values
from tideflow.geometry import DIRICHLET, MINUS, SLIP, Phases, Triangulation
from tideflow.meshing import fitted_mesh
from tideflow.problems import expanding_bubble, rising_bubble

from conftest import grid_mesh


@pytest.fixture(scope="module")
def sol1():
    pb = expanding_bubble("linear", 16)
    fm = fitted_mesh(pb.domain, pb.gamma0, Phases(1.0, 3.0, 1.0, 2.0))
    return pb, fm, P2Space(fm.tri)


def _boundary_dofs(space):
    tri = space.tri
    b = tri.edges[tri.boundary_edges]
    nodes = np.unique(np.r_[b.ravel(), tri.n_vertices + tri.boundary_edges])
    return np.r_[2 * nodes, 2 * nodes + 1]


def test_viscous_kills_rigid_rotation(sol1):
    _, fm, space = sol1
    A = viscous_matrix(space, fm.mu)
    u = space.interpolate(lambda z: np.c_[-z[:, 1], z[:, 0]])
    assert np.abs(A @ u).max() <= 1e-12


def test_viscous_symmetric(sol1):
    _, fm, space = sol1
    A = viscous_matrix(space, fm.mu)
    assert abs(A - A.T).max() <= 1e-14 * abs(A).max()


def test_antisymmetric_convection_is_skew(sol1):
    _, fm, space = sol1
    rng = np.random.default_rng(0)
    w = rng.normal(size=space.qpts.shape)
    D = convection_matrix(space, fm.rho, w, antisymmetric=True)
    assert abs(D + D.T).max() <= 1e-14 * max(abs(D).max(), 1.0)
    for _ in range(20):
        v = rng.normal(size=space.n_dofs)
        assert abs(v @ D @ v) <= 1e-13 * (v @ v)


def test_antisymmetric_velocity_block_skew_part(sol1):
    _, fm, space = sol1
    rng = np.random.default_rng(1)
    w = rng.normal(size=space.qpts.shape)
    B, _ = velocity_block(space, fm.rho, fm.mu, 0.1, "antisymmetric", w)
    B0, _ = velocity_block(space, fm.rho, fm.mu, 0.1, "antisymmetric", None)
    conv = B - B0
    v = rng.normal(size=B.shape[0])
    assert abs(v @ conv @ v) <= 1e-12 * (v @ v)


def test_mass_area_bookkeeping(sol1):
    _, fm, space = sol1
    M = mass_matrix(space, fm.rho)
    area = fm.tri.areas()
    ref = 1.0 * area[fm.labels != MINUS].sum() + 3.0 * area[fm.labels == MINUS].sum()
    one = np.ones(space.n_dofs)
    assert one @ M @ one == pytest.approx(ref, rel=1e-13)


def test_pressure_constant_column_vs_tangential_field(sol1):
    _, fm, space = sol1
    C = pressure_matrix(space)
    rng = np.random.default_rng(2)
    xi = rng.normal(size=2 * space.n_dofs)
    xi[_boundary_dofs(space)] = 0.0
    nv, nt = fm.tri.n_vertices, fm.tri.n_triangles
    const_p1 = np.r_[np.ones(nv), np.zeros(nt)]
    const_p0 = np.r_[np.zeros(nv), np.ones(nt)]
    assert abs(const_p1 @ (C.T @ xi)) <= 1e-12
    assert abs(const_p0 @ (C.T @ xi)) <= 1e-12


def test_pressure_divergence_of_identity(sol1):
    _, fm, space = sol1
    C = pressure_matrix(space)
    u = space.interpolate(lambda z: z)
    p0_part = (C.T @ u)[fm.tri.n_vertices:]
    assert np.allclose(p0_part, -2.0 * fm.tri.areas(), atol=1e-13)


def test_pressure_divergence_free_quadratic(sol1):
    _, fm, space = sol1
    C = pressure_matrix(space)
    u = space.interpolate(lambda z: np.c_[-z[:, 0] ** 2, 2 * z[:, 0] * z[:, 1]])
    assert np.abs(C.T @ u).max() <= 1e-13


def test_continuity_rhs_zero():
    tri = grid_mesh(3)
    space = P2Space(tri)
    assert np.all(continuity_rhs(space, dirichlet_flux(space, np.zeros((space.n_dofs, 2)))) == 0)


def test_continuity_rhs_expanding_flux(sol1):
    pb, fm, space = sol1
    g = pb.g(space.nodes, 0.0)
    flux = dirichlet_flux(space, g)
    assert flux == pytest.approx(0.15 * 2 * 4, rel=1e-13)
    fdiv = pb.fdiv(space.qpts, 0.0)
    beta = continuity_rhs(space, flux, fdiv)
    nv = fm.tri.n_vertices
    # phi = 1 as the sum of all P1 hats, or of all P0 indicators
    assert beta[:nv].sum() == pytest.approx(1.2, rel=1e-12)
    assert beta[nv:].sum() == pytest.approx(1.2, rel=1e-12)


def test_load_vector_quadrature_oracle():
    tri = Triangulation([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2], [0, 2, 3]])
    space = P2Space(tri)
    alpha = 0.15
    rho = np.array([1.0, 4.0])
    f = rho[:, None, None] * alpha ** 2 * space.qpts
    got = load_vector(space, f).reshape(-1, 2)
    ref = np.zeros((space.n_dofs, 2))
    for t in range(2):
        a, b, c = tri.vertices[tri.triangles[t]]
        J = np.c_[b - a, c - a]
        det = abs(np.linalg.det(J))
        for i in range(6):
            for comp in range(2):
                def integrand(s, r):
                    x = a + J @ np.array([r, s])
                    phi = p2_values(np.array([1 - r - s, r, s]))[i]
                    return rho[t] * alpha ** 2 * x[comp] * phi * det
                val, _ = dblquad(integrand, 0, 1, 0, lambda r: 1 - r, epsabs=1e-14)
                ref[space.cell_dofs[t, i], comp] += val
    assert np.allclose(got, ref, atol=1e-12)


def test_benchmark_wall_constraints():
    pb = rising_bubble(1, 16)
    fm = fitted_mesh(pb.domain, pb.gamma0, pb.phases)
    space = P2Space(fm.tri)
    cons = velocity_constraints(space)
    fixed = dict(zip(cons.dofs.tolist(), cons.values.tolist()))
    nodes = space.nodes
    for n, (x, y) in enumerate(nodes):
        on_wall = abs(x) < 1e-12 or abs(x - 1) < 1e-12
        on_lid = abs(y) < 1e-12 or abs(y - 2) < 1e-12
        if on_lid:
            assert 2 * n in fixed and 2 * n + 1 in fixed
        elif on_wall:
            assert 2 * n in fixed and 2 * n + 1 not in fixed
        else:
            assert 2 * n not in fixed and 2 * n + 1 not in fixed
    corner = int(np.flatnonzero(np.all(np.abs(nodes) < 1e-12, axis=1))[0])
    assert fixed[2 * corner] == 0.0 and fixed[2 * corner + 1] == 0.0
    assert corner in cons.dirichlet_nodes
    assert all(v == 0.0 for v in fixed.values())


def test_full_dirichlet_constraints(sol1):
    pb, fm, space = sol1
    g = pb.g(space.nodes, 0.0)
    cons = velocity_constraints(space, g)
    assert np.array_equal(cons.dofs, np.sort(_boundary_dofs(space)))
    nodes = cons.dofs // 2
    assert np.allclose(cons.values, 0.15 * space.nodes[nodes, cons.dofs % 2], atol=0)


def test_slip_requires_axis_aligned():
    tri = Triangulation([[0, 0], [1, 0.2], [0.5, 1]], [[0, 1, 2]],
                        {(0, 1): SLIP, (1, 2): DIRICHLET, (0, 2): DIRICHLET})
    with pytest.raises(ValueError):
        velocity_constraints(P2Space(tri))


def test_assembly_deterministic(sol1):
    _, fm, space = sol1
    w = space.values_at_quadrature(space.interpolate(lambda z: np.c_[z[:, 1], -z[:, 0]]))
    B1, _ = velocity_block(space, fm.rho, fm.mu, 0.1, "explicit", w)
    B2, _ = velocity_block(P2Space(fm.tri), fm.rho, fm.mu, 0.1, "explicit", w)
    assert np.array_equal(B1.data, B2.data) and np.array_equal(B1.indices, B2.indices)


def test_velocity_block_validation(sol1):
    _, fm, space = sol1
    with pytest.raises(ValueError):
        velocity_block(space, fm.rho, fm.mu, 0.0, "explicit")
    with pytest.raises(ValueError):
        velocity_block(space, fm.rho, fm.mu, 0.1, "bogus")


def test_ale_mass_on_displaced_mesh(sol1):
    _, fm, space = sol1
    moved = P2Space(fm.tri.moved(fm.tri.vertices * 1.01))
    B, M_old = velocity_block(space, fm.rho, fm.mu, 1.0, "ale", mass_space=moved)
    B_ref, M_ref = velocity_block(space, fm.rho, fm.mu, 1.0, "explicit")
    one = np.zeros(B.shape[0])
    one[0::2] = 1.0
    # both mass terms live on the displaced mesh, whose area is scaled by 1.01^2
    assert one @ M_old @ one == pytest.approx(1.01 ** 2 * (one @ M_ref @ one), rel=1e-12)
    assert one @ (B - B_ref) @ one == pytest.approx(one @ (M_old - M_ref) @ one, rel=1e-10)


def test_dirichlet_marker_default():
    tri = grid_mesh(2)
    assert set(tri.boundary_markers().values()) == {DIRICHLET}
