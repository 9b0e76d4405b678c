"""Closed-form references: conducting/magnetic sphere and ellipsoid polarization tensors.

The sphere solution keeps the interior wave equation exactly (wavenumber
kappa = k alpha sqrt(eps_r mu_r) in unit-radius coordinates) and matches it to
a static exterior, which is the quasi-static model.  Only the magnetic dipole
(n = 1) term is excited by a uniform background field.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .core import DomainError, Rank2TensorC

CF_CROSSOVER = 10.0   # |kappa| above which Bessel ratios come from the continued fraction
SERIES_TOL = 1e-13


class SeriesError(ArithmeticError):
    """The continued fraction did not settle within the allowed depth."""

    def __init__(self, message, tail):
        super().__init__(message)
        self.tail = tail


def principal_sqrt(z: complex) -> complex:
    """Square root with Im >= 0 (decaying interior waves for exp(-i omega t))."""
    w = cmath.sqrt(complex(z))
    return -w if w.imag < 0 or (w.imag == 0 and w.real < 0) else w


@dataclass(frozen=True)
class SphereSeriesParams:
    mu_r: float
    eps_r: complex = 1.0
    k_alpha: float = 0.0
    order: int = 30

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("truncation order must be at least 1")
        if not self.mu_r > 0:
            raise DomainError("mu_r must be positive")
        if self.k_alpha < 0:
            raise DomainError("k_alpha must be non-negative")

    @property
    def kappa(self) -> complex:
        # interior wavenumber relative to a quasi-static exterior: kappa^2 = nu mu_r
        return principal_sqrt(self.k_alpha**2 * (complex(self.eps_r) - 1) * self.mu_r)

    @classmethod
    def eddy(cls, mu_r, nu_i, k_alpha=1.0, order=30):
        """Parameters whose interior wavenumber is sqrt(i nu_i mu_r).

        Displacement currents are dropped: eps_r = 1 + i nu_i / k_alpha^2.
        """
        if nu_i < 0:
            raise DomainError("nu_i must be non-negative")
        if not k_alpha > 0:
            raise DomainError("k_alpha must be positive")
        return cls(mu_r=mu_r, eps_r=1 + 1j * nu_i / k_alpha**2, k_alpha=k_alpha, order=order)


# ----------------------------------------------------------- Bessel ratios


def _ratio_cf(n: int, z: complex, depth: int) -> tuple[complex, float]:
    """j_n(z) / j_{n-1}(z) from the continued fraction
    r_n = 1 / ((2n+1)/z - r_{n+1}), modified Lentz; returns (ratio, last update size)."""
    tiny = 1e-300
    f = tiny
    c, d = f, 0.0
    delta = 1.0
    for m in range(n, n + depth):
        b = (2 * m + 1) / z
        a = 1.0 if m == n else -1.0
        d = b + a * d
        d = tiny if d == 0 else d
        c = b + a / c
        c = tiny if c == 0 else c
        d = 1.0 / d
        delta = c * d
        f *= delta
        if abs(delta - 1.0) < SERIES_TOL:
            break
    # the first partial numerator is 1 and the result is 1/(b_n - r_{n+1}) = f
    return f, abs(delta - 1.0)


def bessel_ratio(n: int, z: complex, order: int = 30) -> complex:
    """j_n(z) / j_{n-1}(z) for n >= 1."""
    z = complex(z)
    if abs(z) <= CF_CROSSOVER:
        if abs(z) < 1e-8:
            return z / (2 * n + 1)
        return complex(special.spherical_jn(n, z) / special.spherical_jn(n - 1, z))
    depth = order
    # the fraction starts converging once the depth exceeds |z|
    while True:
        value, tail = _ratio_cf(n, z, depth)
        if tail < SERIES_TOL:
            return value
        if depth > 64 * (abs(z) + 100):
            raise SeriesError(f"continued fraction for j_{n}/j_{n - 1} at |z|={abs(z):.3g} did not converge", tail)
        depth *= 2


def j2_over_j0(z: complex, order: int = 30) -> complex:
    z = complex(z)
    if abs(z) < 1e-3:
        z2 = z * z
        return z2 / 15 + 2 * z2 * z2 / 315
    return bessel_ratio(2, z, order) * bessel_ratio(1, z, order)


def j2_over_j0_closed(z: complex) -> complex:
    """Same ratio from elementary functions, 3/z^2 - 1 - 3 cot(z)/z with an
    overflow-free cotangent; an independent route used for cross-checks."""
    z = complex(z)
    if abs(z) < 1e-3:
        z2 = z * z
        return z2 / 15 + 2 * z2 * z2 / 315
    return 3 / z**2 - 1 - 3 * _cot(z) / z


def _cot(z: complex) -> complex:
    # for Im z >= 0 exp(2iz) is bounded, so no overflow
    if z.imag < 0:
        return -_cot(-z)
    e = cmath.exp(2j * z)
    return -1j * (1 + e) / (1 - e)


def _jn_over_sin(n: int, z, kappa: complex):
    """j_n(z) / sin(kappa) for arrays z = kappa r with 0 <= r <= 1, without overflow."""
    z = np.asarray(z, complex)
    e2 = cmath.exp(2j * kappa)
    if abs(kappa) <= CF_CROSSOVER:
        return special.spherical_jn(n, z) / cmath.sin(kappa)
    out = np.empty_like(z)
    small = np.abs(z) < 1.0
    inv_sin = -2j * cmath.exp(1j * kappa) / (1 - e2)
    out[small] = special.spherical_jn(n, z[small]) * inv_sin
    zz = z[~small]
    # sin(z)/sin(kappa) and cos(z)/sin(kappa) with decaying exponentials only
    decay = np.exp(1j * (kappa - zz))
    s = decay * (1 - np.exp(2j * zz)) / (1 - e2)
    c = decay * (1 + np.exp(2j * zz)) / (1j * (1 - e2))
    if n == 0:
        out[~small] = s / zz
    elif n == 1:
        out[~small] = s / zz**2 - c / zz
    elif n == 2:
        out[~small] = (3 / zz**2 - 1) * s / zz - 3 * c / zz**2
    else:
        raise ValueError("only n <= 2 is needed")
    return out


# ----------------------------------------------------------- sphere MPT


def _sphere_coefficient(mu_r: float, kappa: complex, order: int) -> complex:
    if kappa == 0:
        return 4 * math.pi * (mu_r - 1) / (mu_r + 2)
    rho = j2_over_j0(kappa, order)
    return 2 * math.pi * ((2 * mu_r - 2) + (2 * mu_r + 1) * rho) / ((mu_r + 2) + (mu_r - 1) * rho)


def sphere_mpt_full(p: SphereSeriesParams, alpha: float) -> complex:
    """Diagonal coefficient m of M = m I for a sphere of radius alpha (quasi-static model)."""
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    return alpha**3 * _sphere_coefficient(p.mu_r, p.kappa, p.order)


def sphere_mpt_eddy(mu_r: float, nu_i: float, alpha: float, order: int = 30) -> complex:
    """Same coefficient with the eddy-current wavenumber sqrt(i nu_i mu_r)."""
    if nu_i < 0:
        raise DomainError("nu_i must be non-negative")
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    if not mu_r > 0:
        raise DomainError("mu_r must be positive")
    kappa = principal_sqrt(1j * nu_i * mu_r)
    return alpha**3 * _sphere_coefficient(mu_r, kappa, order)


# -------------------------------------------------- Polya-Szego tensors


def polya_szego_sphere(contrast: complex, alpha: float) -> Rank2TensorC:
    c = complex(contrast)
    if abs(c + 2) < 1e-12:
        raise ArithmeticError("contrast -2 is the plasmonic singularity of the sphere")
    return Rank2TensorC.identity(alpha**3 * 4 * math.pi * (c - 1) / (c + 2))


def depolarization_factors(semi_axes) -> np.ndarray:
    """L_j = (abc/2) int_0^inf ds / ((s + a_j^2) sqrt((s+a^2)(s+b^2)(s+c^2)))."""
    axes = np.asarray(semi_axes, float)
    if axes.shape != (3,) or not np.all(axes > 0):
        raise DomainError("semi-axes must be three positive numbers")
    if np.allclose(axes, axes[0], rtol=1e-14):
        return np.full(3, 1 / 3)
    a, b, c = axes
    out = np.empty(3)
    for j, aj in enumerate(axes):
        def f(s):
            return 1.0 / ((s + aj**2) * math.sqrt((s + a * a) * (s + b * b) * (s + c * c)))
        val, err = integrate.quad(f, 0, np.inf, epsabs=0, epsrel=1e-13, limit=200)
        if not np.isfinite(val) or err > 1e-9 * abs(val):
            raise ArithmeticError(f"depolarization quadrature failed (error estimate {err:.2e})")
        out[j] = 0.5 * a * b * c * val
    return out


def polya_szego_ellipsoid(semi_axes, contrast: complex, alpha: float) -> Rank2TensorC:
    """Diagonal tensor alpha^3 |B| (c-1) / (1 + (c-1) L_j) in the principal axes."""
    L = depolarization_factors(semi_axes)
    c = complex(contrast)
    denom = 1 + (c - 1) * L
    if np.any(np.abs(denom) < 1e-12):
        raise ArithmeticError("contrast on the singular set 1 + (c-1) L_j = 0")
    volume = 4 * math.pi / 3 * float(np.prod(semi_axes))
    return Rank2TensorC(np.diag(alpha**3 * volume * (c - 1) / denom))


# ------------------------------------------------------ interior fields


@dataclass(frozen=True)
class SphereFields:
    """Fields inside a sphere of radius alpha centred at z under a uniform H0.

    Electric fields use the scaled convention curl E = i k mu H (E = E_phys / Z0).
    The exterior is the static dipole moment `moment` = m H0 plus the background.
    """

    params: SphereSeriesParams
    alpha: float
    centre: np.ndarray
    H0: np.ndarray
    k: float
    amplitude: complex
    moment: np.ndarray
    tail: float = 0.0

    def _local(self, x):
        x = np.atleast_2d(np.asarray(x, float))
        xi = (x - self.centre) / self.alpha
        r = np.linalg.norm(xi, axis=1)
        if np.any(r > 1 + 1e-12):
            raise DomainError("interior fields requested outside the sphere")
        return xi, r

    def H(self, x) -> np.ndarray:
        xi, r = self._local(x)
        kappa = self.params.kappa
        H0 = self.H0
        if kappa == 0:
            return np.tile(self.amplitude * H0, (len(r), 1))
        z = kappa * r
        j0, j1, j2 = (_jn_over_sin(n, z, kappa) for n in (0, 1, 2))
        rs = np.where(r > 0, r, 1.0)
        # small-r limits: j1/r -> kappa/3 j0, j2/r^2 -> kappa^2/15 j0
        lead = np.where(r > 0, kappa * j0 - j1 / rs, 2 * kappa / 3 * j0)
        quad = np.where(r > 0, kappa * j2 / rs**2, kappa**3 / 15 * j0)
        proj = xi @ H0
        return self.amplitude * (lead[:, None] * H0 + (quad * proj)[:, None] * xi)

    def E(self, x) -> np.ndarray:
        xi, r = self._local(x)
        kappa = self.params.kappa
        mu = self.params.mu_r
        if kappa == 0:
            # a psi -> amplitude / 2 as kappa -> 0
            psi = np.full(len(r), 0.5)
            scale = 1j * self.k * mu * self.alpha * self.amplitude
        else:
            j1 = _jn_over_sin(1, kappa * r, kappa)
            rs = np.where(r > 0, r, 1.0)
            psi = np.where(r > 0, j1 / rs, kappa / 3 * _jn_over_sin(0, 0 * r, kappa))
            scale = 1j * self.k * mu * self.alpha * self.amplitude
        return scale * psi[:, None] * np.cross(self.H0, xi)


def sphere_interior_fields(p: SphereSeriesParams, H0, alpha: float = 1.0, centre=(0.0, 0.0, 0.0),
                           k: float | None = None) -> SphereFields:
    """Interior fields of the sphere for a uniform background H0 (any complex 3-vector).

    With x the unit-radius coordinate and psi = j1(kappa r)/r:
      H = a [(kappa j0 - j1/r) H0 + kappa j2/r^2 (x . H0) x],  E = i k mu_r alpha a psi H0 x x,
    where a = 3 / (2 (mu_r - 1) j1(kappa) + 2 kappa j0(kappa)) fixes both interface conditions.
    The static case reduces to H = 3/(mu_r + 2) H0.  Only the n = 1 mode is excited by a
    uniform field, so the reported tail is zero.
    """
    H0 = np.asarray(H0, complex)
    if H0.shape != (3,):
        raise ValueError("H0 must be a 3-vector")
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    kappa = p.kappa
    mu = p.mu_r
    if k is None:
        k = p.k_alpha / alpha
    if kappa == 0:
        amplitude = 3 / (mu + 2)
    else:
        # amplitude carries a factor sin(kappa), matching _jn_over_sin; kappa j0(kappa) / sin(kappa) = 1
        amplitude = 3 / (2 * (mu - 1) * complex(_jn_over_sin(1, kappa, kappa)) + 2.0)
    moment = sphere_mpt_full(p, alpha) * H0
    return SphereFields(params=p, alpha=float(alpha), centre=np.asarray(centre, float), H0=H0, k=float(k),
                        amplitude=complex(amplitude), moment=moment)
