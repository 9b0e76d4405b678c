import functools

import pytest

from mptwave.core import ContrastSet
from mptwave.fem import SolverParams, ThetaProblem, VarthetaProblem
from mptwave.mesh import BoundaryLayer, UnitShape, generate_mesh

# coarse sphere mesh for the unit tests: every oracle check below passes on it at 5 %
TEST_RESOLUTION = 0.3
TEST_LAYER = BoundaryLayer(0.02, 1.3)
PARAMS = SolverParams(tol=1e-8, max_iter=1000)


@functools.lru_cache(maxsize=None)
def sphere_mesh():
    return generate_mesh(UnitShape.sphere(), 4.0, TEST_RESOLUTION, boundary_layer=TEST_LAYER)


@functools.lru_cache(maxsize=None)
def coarse_sphere_mesh():
    return generate_mesh(UnitShape.sphere(), 4.0, 0.4)


@functools.lru_cache(maxsize=None)
def scalar_sphere_mesh():
    # nodal problems are cheap, so the scalar checks use a finer mesh
    return generate_mesh(UnitShape.sphere(), 4.0, 0.15)


@functools.lru_cache(maxsize=None)
def ellipsoid_mesh():
    return generate_mesh(UnitShape.ellipsoid(1.0, 0.5, 0.5), 4.0, 0.1)


@functools.lru_cache(maxsize=None)
def theta_solves(problem, nu_i, mu_r, mesh_name="sphere", axes=(1, 2, 3)):
    mesh = {"sphere": sphere_mesh, "coarse": coarse_sphere_mesh}[mesh_name]()
    p = ThetaProblem(mesh, ContrastSet.eddy(nu_i, mu_r), problem, PARAMS)
    return tuple(p.solve(i) for i in axes)


@functools.lru_cache(maxsize=None)
def vartheta_solves(eps_r, mesh_name="sphere"):
    mesh = {"sphere": scalar_sphere_mesh, "ellipsoid": ellipsoid_mesh, "coarse": coarse_sphere_mesh}[mesh_name]()
    p = VarthetaProblem(mesh, eps_r, PARAMS)
    return tuple(p.solve(i) for i in (1, 2, 3))


@pytest.fixture(scope="session")
def params():
    return PARAMS


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
