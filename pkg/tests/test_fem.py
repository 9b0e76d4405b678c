import math

import numpy as np
import pytest

from conftest import PARAMS, coarse_sphere_mesh, sphere_mesh, theta_solves
from mptwave.core import ContrastSet, Excitation, MaterialSpec, ObjectPlacement, derive_contrasts
from mptwave.fem import (IllConditionedError, SolverParams, ThetaProblem, field_integrals, solve_phi_eddy,
                         solve_theta_eddy, solve_theta_full, solve_theta_static, solve_vartheta)
from mptwave.mesh import INTERIOR
from mptwave.oracles import sphere_mpt_eddy
from mptwave.tensors import assemble_N, mpt_column

BALL = 4 * math.pi / 3


def interior_curls(fld):
    cells = np.flatnonzero(fld.mesh.regions == INTERIOR)
    return fld.curl(cells)


def test_no_contrast_gives_zero_field():
    mesh = coarse_sphere_mesh()
    cs = derive_contrasts(MaterialSpec.from_relative(), Excitation(1e6), ObjectPlacement(0.01))
    fld = solve_theta_full(1, cs, mesh, PARAMS)
    assert not np.any(fld.coefficients)
    assert not np.any(solve_theta_static(2, 1.0, mesh, PARAMS).coefficients)


def test_weak_induction_gives_weak_field():
    # mu_r = 1 and nu_i -> 0: the response is O(nu_i)
    mesh = coarse_sphere_mesh()
    small = [solve_theta_eddy(3, nu, 1.0, mesh, PARAMS) for nu in (1e-3, 1e-4)]
    m = [abs(mpt_column(f, 1.0)[2]) for f in small]
    assert m[0] < 1e-3 and m[1] == pytest.approx(m[0] / 10, rel=0.01)


def test_eddy_at_zero_induction_is_static():
    mesh = coarse_sphere_mesh()
    static = solve_theta_static(1, 100.0, mesh, PARAMS)
    eddy = solve_theta_eddy(1, 0.0, 100.0, mesh, PARAMS)
    # same system; the iterative solves differ only in the near-gradient (gauge) part
    a, b = interior_curls(static), interior_curls(eddy)
    assert np.linalg.norm(a - b) <= 1e-8 * np.linalg.norm(a)
    assert np.allclose(mpt_column(static, 1.0), mpt_column(eddy, 1.0), rtol=1e-8)


@pytest.mark.parametrize("mu_r,expected", [(2.0, math.pi), (100.0, 4 * math.pi * 99 / 102)])
def test_static_sphere(mu_r, expected):
    fld = theta_solves("static", 0.0, mu_r, axes=(1,))[0]
    assert mpt_column(fld, 1.0)[0].real == pytest.approx(expected, rel=0.05)
    assert abs(mpt_column(fld, 1.0)[0].imag) < 1e-12


def test_eddy_sphere_against_series():
    fld = theta_solves("eddy", 12.566, 100.0, axes=(1,))[0]
    m = mpt_column(fld, 1.0)[0]
    assert abs(m - sphere_mpt_eddy(100.0, 12.566, 1.0)) <= 0.05 * abs(sphere_mpt_eddy(100.0, 12.566, 1.0))
    diag = fld.diagnostics
    assert diag["residual"] < 1e-7 and diag["iterations"] > 0


def test_full_and_eddy_solvers_agree():
    # steel sphere (mu_r = 100, 1e6 S/m) at omega = 1e4: the full problem reduces to the eddy-current one
    pl = ObjectPlacement(0.01)
    cs = derive_contrasts(MaterialSpec.from_relative(mu_r=100, sigma=1e6), Excitation(1e4), pl)
    full = solve_theta_full(1, cs, sphere_mesh(), PARAMS)
    eddy = solve_theta_eddy(1, cs.nu_i, cs.mu_r, sphere_mesh(), PARAMS)
    a, b = interior_curls(full), interior_curls(eddy)
    assert np.linalg.norm(a - b) <= 1e-6 * np.linalg.norm(b)
    m = mpt_column(full, pl.alpha)[0]
    oracle = sphere_mpt_eddy(cs.mu_r, cs.nu_i, pl.alpha)
    assert abs(m - oracle) <= 0.05 * abs(oracle)


def test_field_integrals_of_zero_field():
    mesh = coarse_sphere_mesh()
    fld = solve_theta_static(2, 1.0, mesh, PARAMS)
    assert np.allclose(field_integrals(fld, "moment"), 0, atol=1e-12)
    assert np.allclose(field_integrals(fld, "curl_moment"), [0, mesh.interior_volume(), 0], rtol=1e-14)
    assert mesh.interior_volume() == pytest.approx(BALL, rel=1e-9)
    # int xi_m (e_i x xi) over the ball: e_2 x xi = (xi_3, 0, -xi_1), so m = 3 gives (|B|/5, 0, 0)
    assert np.allclose(field_integrals(fld, "cross_moment_m", 3), [BALL / 5, 0, 0], rtol=0.03, atol=1e-3)
    with pytest.raises(ValueError):
        field_integrals(fld, "cross_moment_m", 0)
    with pytest.raises(ValueError):
        field_integrals(fld, "bogus")


def test_curl_moment_is_N():
    fields = theta_solves("eddy", 12.566, 100.0)
    N = assemble_N(fields, 100.0, 1.0)
    for f in fields:
        col = (1 - 1 / 100.0) * field_integrals(f, "curl_moment")
        assert np.allclose(np.asarray(N)[:, f.index - 1], col, rtol=1e-14)


def test_gauge_divergence_is_small():
    fld = theta_solves("eddy", 12.566, 100.0, axes=(1,))[0]
    assert fld.diagnostics["divergence"] < 1e-4


def test_whitney_family_runs():
    mesh = coarse_sphere_mesh()
    fld = ThetaProblem(mesh, ContrastSet.eddy(0.0, 2.0), "static",
                       SolverParams(tol=1e-8, max_iter=1000, edge_family="whitney")).solve(1)
    assert mpt_column(fld, 1.0)[0].real == pytest.approx(math.pi, rel=0.15)


def test_direct_and_iterative_agree():
    mesh = coarse_sphere_mesh()
    it = ThetaProblem(mesh, ContrastSet.eddy(5.0, 2.0), "eddy", SolverParams(tol=1e-10, max_iter=1000)).solve(1)
    lu = ThetaProblem(mesh, ContrastSet.eddy(5.0, 2.0), "eddy", SolverParams(method="direct")).solve(1)
    assert mpt_column(it, 1.0)[0] == pytest.approx(mpt_column(lu, 1.0)[0], rel=1e-7)


def test_bad_inputs():
    mesh = coarse_sphere_mesh()
    with pytest.raises(ValueError):
        solve_theta_eddy(1, -1.0, 2.0, mesh)
    with pytest.raises(ValueError):
        solve_theta_static(4, 2.0, mesh)
    with pytest.raises(ValueError):
        solve_theta_static(1, 0.0, mesh)
    with pytest.raises(IllConditionedError):
        solve_vartheta(1, -2.0, mesh)
    with pytest.raises(ValueError):
        SolverParams(tol=0.1)
    with pytest.raises(ValueError):
        SolverParams(edge_family="nedelec2")


def test_phi_eddy_potential():
    mesh = coarse_sphere_mesh()
    phi = solve_phi_eddy(1, mesh, PARAMS)
    inside = np.unique(mesh.cells[mesh.regions == INTERIOR])
    assert np.allclose(phi.coefficients[inside], -mesh.vertices[inside, 0])
    # outside it decays like a dipole potential
    far = np.linalg.norm(mesh.vertices, axis=1) > 3.5
    near = (np.linalg.norm(mesh.vertices, axis=1) > 1.2) & (np.linalg.norm(mesh.vertices, axis=1) < 1.5)
    assert np.abs(phi.coefficients[far]).max() < np.abs(phi.coefficients[near]).max()
