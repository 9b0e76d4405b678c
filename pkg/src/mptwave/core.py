"""Physical constants, material data, derived contrasts, regimes and tensor value types."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

EPS0 = 8.854e-12
MU0 = 4e-7 * np.pi


class DomainError(ValueError):
    """Raised for physically invalid inputs (negative frequency, size, ...)."""


@dataclass(frozen=True)
class PhysicalConstants:
    eps0: float = EPS0
    mu0: float = MU0

    @property
    def c0(self) -> float:
        return 1.0 / math.sqrt(self.eps0 * self.mu0)


CONSTANTS = PhysicalConstants()


@dataclass(frozen=True)
class MaterialSpec:
    """Permittivity (F/m), permeability (H/m) and conductivity (S/m) of the object."""

    eps_star: float
    mu_star: float
    sigma_star: float

    def __post_init__(self):
        if not self.eps_star > 0:
            raise DomainError(f"eps_star must be positive, got {self.eps_star}")
        if not self.mu_star > 0:
            raise DomainError(f"mu_star must be positive, got {self.mu_star}")
        if not self.sigma_star >= 0:
            raise DomainError(f"sigma_star must be non-negative, got {self.sigma_star}")

    @classmethod
    def from_relative(cls, mu_r=1.0, sigma=0.0, eps_rel=1.0):
        """Build from relative permeability/permittivity and conductivity."""
        return cls(eps_star=eps_rel * EPS0, mu_star=mu_r * MU0, sigma_star=sigma)


@dataclass(frozen=True)
class Excitation:
    omega: float

    def __post_init__(self):
        if not self.omega > 0:
            raise DomainError(f"omega must be positive, got {self.omega}")

    @property
    def k(self) -> float:
        return self.omega * math.sqrt(EPS0 * MU0)

    @property
    def wavelength(self) -> float:
        return 2 * math.pi / self.k


@dataclass(frozen=True)
class ObjectPlacement:
    alpha: float
    z: tuple = (0.0, 0.0, 0.0)
    shape: object = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise DomainError(f"alpha must be positive, got {self.alpha}")
        z = tuple(float(c) for c in self.z)
        if len(z) != 3:
            raise DomainError("z must be a 3-vector")
        object.__setattr__(self, "z", z)

    @property
    def centre(self) -> np.ndarray:
        return np.array(self.z)


@dataclass(frozen=True)
class ContrastSet:
    """Dimensionless contrasts seen by the unit-scale transmission problems."""

    eps_r: complex
    mu_r: float
    nu: complex
    nu_r: float
    nu_i: float
    k_alpha: float

    @classmethod
    def eddy(cls, nu_i: float, mu_r: float) -> "ContrastSet":
        """Contrasts of the eddy-current limit, where only nu_i and mu_r matter.

        eps_r and k_alpha are placeholders (1 and 0); the eddy solvers ignore them.
        """
        return cls(eps_r=1.0 + 0j, mu_r=float(mu_r), nu=1j * nu_i, nu_r=0.0,
                   nu_i=float(nu_i), k_alpha=0.0)


def derive_contrasts(mat: MaterialSpec, exc: Excitation, placement: ObjectPlacement) -> ContrastSet:
    omega, alpha = exc.omega, placement.alpha
    if not omega > 0:
        raise DomainError("omega must be positive")
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    k = exc.k
    eps_r = (mat.eps_star + 1j * mat.sigma_star / omega) / EPS0
    mu_r = mat.mu_star / MU0
    nu_r = (mat.eps_star - EPS0) * MU0 * omega**2 * alpha**2
    nu_i = mat.sigma_star * MU0 * omega * alpha**2
    nu = alpha**2 * k**2 * (eps_r - 1)
    return ContrastSet(eps_r=complex(eps_r), mu_r=float(mu_r), nu=complex(nu),
                       nu_r=float(nu_r), nu_i=float(nu_i), k_alpha=float(k * alpha))


class Regime(enum.Enum):
    FULL_MODEL = "FullModel"
    QUASI_STATIC = "QuasiStatic"
    EDDY_CURRENT = "EddyCurrent"
    SMALL_K_DIELECTRIC = "SmallKDielectric"
    SMALL_ALPHA = "SmallAlpha"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class RegimeThresholds:
    size: float = 1e-2          # alpha / lambda0
    displacement: float = 1e-3  # eps* omega / sigma*


def regime_ratios(cs: ContrastSet, exc: Excitation, placement: ObjectPlacement):
    """Return (alpha/lambda0, eps*omega/sigma*); the second is inf when sigma* = 0."""
    size = placement.alpha / exc.wavelength
    im = cs.eps_r.imag
    displacement = cs.eps_r.real / im if im > 0 else math.inf
    return size, displacement


def classify_regime(cs: ContrastSet, exc: Excitation, placement: ObjectPlacement,
                    thresholds: RegimeThresholds = RegimeThresholds()) -> Regime:
    size, displacement = regime_ratios(cs, exc, placement)
    if size > thresholds.size:
        return Regime.FULL_MODEL
    if displacement <= thresholds.displacement:
        return Regime.EDDY_CURRENT
    return Regime.QUASI_STATIC


def _as_complex_array(values, shape):
    arr = np.array(values, dtype=complex)
    if arr.shape != shape:
        raise ValueError(f"expected shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor entries must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Rank2TensorC:
    """Complex 3x3 tensor indexed (r, i).

    `provenance` is an opaque tag naming the solve the tensor came from; it is
    dropped by arithmetic.
    """

    data: np.ndarray = field(default_factory=lambda: np.zeros((3, 3), complex))
    provenance: str = ""

    def __post_init__(self):
        object.__setattr__(self, "data", _as_complex_array(self.data, (3, 3)))

    @classmethod
    def zeros(cls):
        return cls(np.zeros((3, 3), complex))

    @classmethod
    def identity(cls, scale=1.0):
        return cls(scale * np.eye(3, dtype=complex))

    def __getitem__(self, idx):
        return self.data[idx]

    def __array__(self, dtype=None, copy=None):
        return self.data.astype(dtype) if dtype is not None else self.data.copy()

    def __add__(self, other):
        return Rank2TensorC(self.data + np.asarray(other))

    def __sub__(self, other):
        return Rank2TensorC(self.data - np.asarray(other))

    def __mul__(self, scalar):
        return Rank2TensorC(self.data * scalar)

    __rmul__ = __mul__

    @property
    def T(self):
        return Rank2TensorC(self.data.T)

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))

    def symmetry_defect(self) -> float:
        """||X - X^T|| / ||X|| (0 for the zero tensor)."""
        n = self.norm()
        return 0.0 if n == 0 else float(np.linalg.norm(self.data - self.data.T) / n)

    def is_symmetric(self, tol=1e-10) -> bool:
        return self.symmetry_defect() <= tol

    def isotropy_defect(self) -> float:
        """Distance to the nearest multiple of the identity, relative to ||X||."""
        n = self.norm()
        if n == 0:
            return 0.0
        mean = np.trace(self.data) / 3
        return float(np.linalg.norm(self.data - mean * np.eye(3)) / n)

    def is_isotropic(self, tol=1e-10) -> bool:
        return self.isotropy_defect() <= tol

    def allclose(self, other, rtol=1e-12, atol=0.0) -> bool:
        return bool(np.allclose(self.data, np.asarray(other), rtol=rtol, atol=atol))


@dataclass(frozen=True, eq=False)
class Rank3TensorC:
    """Complex 3x3x3 tensor indexed (m, s, i)."""

    data: np.ndarray = field(default_factory=lambda: np.zeros((3, 3, 3), complex))
    provenance: str = ""

    def __post_init__(self):
        object.__setattr__(self, "data", _as_complex_array(self.data, (3, 3, 3)))

    @classmethod
    def zeros(cls):
        return cls(np.zeros((3, 3, 3), complex))

    def __getitem__(self, idx):
        return self.data[idx]

    def __array__(self, dtype=None, copy=None):
        return self.data.astype(dtype) if dtype is not None else self.data.copy()

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))


def levi_civita() -> np.ndarray:
    eps = np.zeros((3, 3, 3))
    for a, b, c in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        eps[a, b, c] = 1.0
        eps[a, c, b] = -1.0
    return eps


LEVI_CIVITA = levi_civita()
