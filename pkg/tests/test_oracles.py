import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from mptwave.core import DomainError
from mptwave.oracles import (SphereSeriesParams, depolarization_factors, j2_over_j0, j2_over_j0_closed,
                             polya_szego_ellipsoid, polya_szego_sphere, sphere_interior_fields, sphere_mpt_eddy,
                             sphere_mpt_full)

STATIC_100 = 4 * math.pi * 99 / 102


def reference_eddy(mu, nu_i):
    # textbook form with scipy Bessel functions, valid for moderate |kappa|
    kappa = cmath.sqrt(1j * nu_i * mu)
    rho = special.spherical_jn(2, kappa) / special.spherical_jn(0, kappa)
    return 2 * math.pi * ((2 * mu - 2) + (2 * mu + 1) * rho) / ((mu + 2) + (mu - 1) * rho)


def test_no_contrast_gives_zero():
    assert sphere_mpt_full(SphereSeriesParams(mu_r=1.0, eps_r=1.0, k_alpha=0.3), 1.0) == pytest.approx(0, abs=1e-15)
    assert sphere_mpt_eddy(1.0, 0.0, 1.0) == 0


def test_static_limits():
    assert sphere_mpt_eddy(100, 0.0, 1.0) == pytest.approx(STATIC_100, rel=1e-15)
    assert STATIC_100 == pytest.approx(12.196771478642727, rel=1e-15)
    small = SphereSeriesParams(mu_r=2.0, eps_r=1.0 + 1e-3j, k_alpha=1e-4)
    assert sphere_mpt_full(small, 1.0) == pytest.approx(math.pi, rel=1e-8)


@pytest.mark.parametrize("nu_i", [0.01, 0.1, 1.0, 10.0, 100.0, 1000.0])
@pytest.mark.parametrize("mu", [1.0, 2.0, 100.0])
def test_eddy_against_scipy_bessel(mu, nu_i):
    assert sphere_mpt_eddy(mu, nu_i, 1.0) == pytest.approx(reference_eddy(mu, nu_i), rel=1e-10)


def test_frozen_eddy_value():
    assert sphere_mpt_eddy(100, 10.0, 1.0) == pytest.approx(8.622361324998645 + 2.7205540967081485j, rel=1e-12)


def test_perfect_conductor_limit():
    values = [sphere_mpt_eddy(1.0, nu, 1.0) for nu in (1e6, 1e8, 1e10)]
    # the approach is O(1/|kappa|); extrapolate the last two points
    k1, k2 = math.sqrt(1e8), math.sqrt(1e10)
    extrapolated = (values[2] * k2 - values[1] * k1) / (k2 - k1)
    assert extrapolated == pytest.approx(-2 * math.pi, rel=1e-6)
    assert abs(values[2] + 2 * math.pi) < abs(values[1] + 2 * math.pi) < abs(values[0] + 2 * math.pi)


def test_steel_sphere_eddy_and_full_agree():
    from mptwave.core import Excitation, MaterialSpec, ObjectPlacement, derive_contrasts
    mat, pl = MaterialSpec.from_relative(mu_r=100, sigma=1e6), ObjectPlacement(0.01)
    for omega in np.logspace(1, 9, 40):
        cs = derive_contrasts(mat, Excitation(omega), pl)
        full = sphere_mpt_full(SphereSeriesParams(mu_r=cs.mu_r, eps_r=cs.eps_r, k_alpha=cs.k_alpha), 0.01)
        eddy = sphere_mpt_eddy(cs.mu_r, cs.nu_i, 0.01)
        assert abs(eddy - full) / abs(full) <= 1e-2


@settings(max_examples=200, deadline=None)
@given(st.floats(0.5, 3000.0), st.floats(-math.pi, math.pi))
def test_continued_fraction_matches_closed_form(r, phase):
    z = r * cmath.exp(1j * phase)
    if abs(z.imag) > 600:
        return  # cot is +-i to machine precision, both routes agree trivially
    a, b = j2_over_j0(z), j2_over_j0_closed(z)
    if abs(cmath.sin(z)) > 1e-3 * math.cosh(z.imag):  # away from zeros of j0
        assert a == pytest.approx(b, rel=1e-9, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 10.0), st.floats(1.0, 500.0), st.floats(0.0, 1e4))
def test_alpha_cubed_scaling(alpha, mu, nu_i):
    assert sphere_mpt_eddy(mu, nu_i, alpha) == pytest.approx(alpha**3 * sphere_mpt_eddy(mu, nu_i, 1.0), rel=1e-12)


def test_polya_szego_sphere():
    assert polya_szego_sphere(1.0, 1.0).norm() == 0
    assert np.allclose(polya_szego_sphere(2.0, 1.0).data, math.pi * np.eye(3), rtol=1e-15)
    assert np.allclose(polya_szego_sphere(1e6, 1.0).data, 4 * math.pi * np.eye(3), rtol=1e-5)
    with pytest.raises(ArithmeticError):
        polya_szego_sphere(-2.0, 1.0)


def test_depolarization_factors():
    assert np.allclose(depolarization_factors((1, 1, 1)), 1 / 3, rtol=1e-15)
    L = depolarization_factors((1.0, 0.5, 0.5))
    assert L.sum() == pytest.approx(1.0, abs=1e-10)
    assert L[0] < 1 / 3 < L[1]
    assert L[1] == pytest.approx(L[2], rel=1e-12)
    # prolate spheroid closed form with eccentricity e
    e = math.sqrt(1 - 0.25)
    L_long = (1 - e * e) / e**3 * (math.atanh(e) - e)
    assert L[0] == pytest.approx(L_long, rel=1e-10)
    with pytest.raises(DomainError):
        depolarization_factors((1, -1, 1))


def test_ellipsoid_reduces_to_sphere():
    assert polya_szego_ellipsoid((1, 1, 1), 2.0, 1.0).allclose(polya_szego_sphere(2.0, 1.0), rtol=1e-8)
    # and the nearly spherical quadrature path is continuous
    near = polya_szego_ellipsoid((1, 1 - 1e-7, 1), 2.0, 1.0)
    assert np.allclose(near.data, polya_szego_sphere(2.0, 1.0).data, rtol=1e-6)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 1.0), st.floats(0.1, 1.0), st.floats(0.1, 20.0))
def test_depolarization_sum_rule(b, c, contrast):
    L = depolarization_factors((1.0, b, c))
    assert L.sum() == pytest.approx(1.0, abs=1e-10)
    T = polya_szego_ellipsoid((1.0, b, c), contrast, 2.0)
    assert T.allclose(polya_szego_ellipsoid((1.0, b, c), contrast, 1.0) * 8.0, rtol=1e-12)


# ---------------------------------------------------------- interior fields


def test_zero_contrast_interior_equals_background():
    p = SphereSeriesParams(mu_r=1.0, eps_r=1.0, k_alpha=0.0)
    H0 = np.array([0.2, -1.0, 0.5j])
    f = sphere_interior_fields(p, H0, alpha=0.5, k=3.0)
    pts = np.array([[0.1, 0.2, -0.1], [0.0, 0.0, 0.0], [0.3, 0.0, 0.3]])
    assert np.allclose(f.H(pts), H0)
    assert np.allclose(f.E(pts), 0.5j * 3.0 * np.cross(H0, pts))


def test_static_interior_is_uniform():
    p = SphereSeriesParams(mu_r=100.0, eps_r=1.0, k_alpha=0.0)
    f = sphere_interior_fields(p, [0, 0, 1.0])
    pts = np.random.default_rng(0).uniform(-0.5, 0.5, (20, 3))
    assert np.allclose(f.H(pts), [0, 0, 3 / 102])


def test_skin_effect_is_monotone():
    p = SphereSeriesParams.eddy(100.0, 1000.0)
    f = sphere_interior_fields(p, [0, 0, 1.0])
    r = np.linspace(0.0, 1.0, 200)
    mags = np.linalg.norm(f.H(np.c_[r, 0 * r, 0 * r]), axis=1)
    assert np.all(np.diff(mags) > 0)
    assert mags[0] < 1e-3 * mags[-1]


@pytest.mark.parametrize("mu,nu_i", [(2.0, 10.0), (100.0, 1.0), (1.0, 5000.0)])
def test_interior_fields_solve_maxwell(mu, nu_i):
    # curl E = i k mu H and curl H = -i k (eps_r - 1) E against a quasi-static exterior
    k_alpha = 0.5
    p = SphereSeriesParams.eddy(mu, nu_i, k_alpha=k_alpha)
    f = sphere_interior_fields(p, [0.3, 0.0, 1.0], alpha=1.0, k=k_alpha)
    x, h = np.array([0.2, -0.3, 0.4]), 1e-5

    def curl(field):
        J = np.zeros((3, 3), complex)
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            J[:, j] = (field(x + e)[0] - field(x - e)[0]) / (2 * h)
        return np.array([J[2, 1] - J[1, 2], J[0, 2] - J[2, 0], J[1, 0] - J[0, 1]])

    H, E = f.H(x)[0], f.E(x)[0]
    assert np.allclose(curl(f.E), 1j * k_alpha * mu * H, rtol=1e-5, atol=1e-7 * np.abs(H).max())
    J = -1j * k_alpha * (p.eps_r - 1) * E
    assert np.allclose(curl(f.H), J, rtol=1e-5, atol=1e-7 * np.abs(J).max())


@pytest.mark.parametrize("mu,nu_i", [(2.0, 10.0), (100.0, 30.0)])
def test_interface_conditions(mu, nu_i):
    # normal B and tangential H continue into the exterior dipole field at r = 1
    p = SphereSeriesParams.eddy(mu, nu_i)
    H0 = np.array([0.0, 0.0, 1.0])
    f = sphere_interior_fields(p, H0)
    m = sphere_mpt_eddy(mu, nu_i, 1.0)
    for n in np.array([[0, 0, 1.0], [1.0, 0, 0], [0.6, 0, 0.8]]):
        dip = (3 * n * (n @ H0) - H0) * m / (4 * math.pi)
        H_out = H0 + dip
        H_in = f.H(n * (1 - 1e-13))[0]
        assert mu * (H_in @ n) == pytest.approx(H_out @ n, abs=1e-10)
        assert np.allclose(np.cross(n, H_in), np.cross(n, H_out), atol=1e-10)


def test_outside_sphere_is_rejected():
    f = sphere_interior_fields(SphereSeriesParams(mu_r=2.0), [0, 0, 1.0])
    with pytest.raises(DomainError):
        f.H([[1.5, 0, 0]])
