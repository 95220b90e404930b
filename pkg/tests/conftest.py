import numpy as np
import pytest

from tideflow.geometry import Phases, Triangulation
from tideflow.meshing import DomainSpec, fitted_mesh
from tideflow.problems import circle


def grid_mesh(n, lo=(0.0, 0.0), hi=(1.0, 1.0), markers=None):
    """Structured n x n grid of squares split in a union-jack pattern; for even
    n no triangle has two boundary edges."""
    xs = np.linspace(lo[0], hi[0], n + 1)
    ys = np.linspace(lo[1], hi[1], n + 1)
    X, Y = np.meshgrid(xs, ys)
    verts = np.c_[X.ravel(), Y.ravel()]
    tris = []
    for j in range(n):
        for i in range(n):
            a = j * (n + 1) + i
            b, c, d = a + 1, a + n + 2, a + n + 1
            if (i + j) % 2 == 0:
                tris += [(a, b, c), (a, c, d)]
            else:
                tris += [(a, b, d), (b, c, d)]
    return Triangulation(verts, np.array(tris), markers)


@pytest.fixture
def unit_grid():
    return grid_mesh(8)


@pytest.fixture(scope="session")
def tiny_fm():
    """Fitted mesh with an 8-gon interface and 32 triangles."""
    return fitted_mesh(DomainSpec(outer=(-1.0, -1.0, 1.0, 1.0), h_char=0.5),
                       circle((0.0, 0.0), 0.5, 8), Phases(1.0, 2.0, 1.0, 0.5))


@pytest.fixture(scope="session")
def circle_fm():
    """32-gon of radius 0.5 in (-1, 1)^2 meshed at h = 0.1."""
    return fitted_mesh(DomainSpec(outer=(-1.0, -1.0, 1.0, 1.0), h_char=0.1),
                       circle((0.0, 0.0), 0.5, 32))


@pytest.fixture(scope="session")
def hole_fm():
    spec = DomainSpec(outer=(-1.0, -1.0, 1.0, 1.0), h_char=2 * np.pi * 0.5 / 32,
                      hole=(-1 / 3, -1 / 3, 1 / 3, 1 / 3))
    return fitted_mesh(spec, circle((0.0, 0.0), 0.5, 32))


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
