"""Perturbed magnetic field H_delta = H_alpha - H_0 away from a small object.

Every formula here is an explicit function of the observation point, the
object centre and the polarizability tensors.  Fields use the scaled
electric field E = E_phys / Z0, so the background satisfies
curl E0 = i k H0 and curl H0 = -i k E0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import LEVI_CIVITA, ContrastSet, ObjectPlacement, Rank2TensorC
from .greens import greens_batch, greens_eval
from .tensors import TensorBundle, UsageError

# observation points closer than this many object sizes are rejected
VALIDITY_RADIUS = 3.0


class ValidityError(ValueError):
    """The observation point is too close to the object for the expansion."""


class QuadratureError(ArithmeticError):
    def __init__(self, message, tail):
        super().__init__(message)
        self.tail = tail


# --------------------------------------------------------- backgrounds


@dataclass(frozen=True)
class BackgroundField:
    """Closed-form incident fields.

    kind "uniform": H0 constant, E0 = (i k / 2) H0 x (x - origin); this
    satisfies curl E0 = i k H0 exactly and curl H0 = -i k E0 up to O(k^2 |x|),
    which is the quasi-static background.
    kind "plane": H0 = amplitude exp(i k d.x), E0 = H0 x d, an exact solution.
    """

    kind: str
    k: float
    amplitude: np.ndarray
    direction: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        amp = np.asarray(self.amplitude, complex)
        d = np.asarray(self.direction, float)
        if amp.shape != (3,) or d.shape != (3,):
            raise ValueError("amplitude and direction must be 3-vectors")
        if self.kind not in ("uniform", "plane"):
            raise ValueError(f"unknown background kind {self.kind!r}")
        if self.k < 0:
            raise ValueError("k must be non-negative")
        d = d / np.linalg.norm(d)
        if self.kind == "plane" and abs(amp @ d) > 1e-12 * max(np.linalg.norm(amp), 1e-300):
            raise ValueError("plane wave polarization must be transverse to the direction")
        object.__setattr__(self, "amplitude", amp)
        object.__setattr__(self, "direction", d)
        object.__setattr__(self, "origin", np.asarray(self.origin, float))

    @classmethod
    def uniform(cls, H0, k=0.0, origin=(0.0, 0.0, 0.0)):
        return cls("uniform", float(k), np.asarray(H0, complex), origin=np.asarray(origin, float))

    @classmethod
    def plane(cls, amplitude, direction, k):
        return cls("plane", float(k), np.asarray(amplitude, complex), np.asarray(direction, float))

    def _phase(self, x):
        return np.exp(1j * self.k * (np.atleast_2d(x) @ self.direction))

    def H(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, float))
        if self.kind == "uniform":
            return np.tile(self.amplitude, (len(x), 1))
        return self._phase(x)[:, None] * self.amplitude

    def E(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, float))
        if self.kind == "uniform":
            return 0.5j * self.k * np.cross(self.amplitude, x - self.origin)
        return np.cross(self.H(x), self.direction)

    def H_jacobian(self, x) -> np.ndarray:
        """(n, 3, 3) with [j, l] = dH_j / dx_l."""
        x = np.atleast_2d(np.asarray(x, float))
        if self.kind == "uniform":
            return np.zeros((len(x), 3, 3), complex)
        return 1j * self.k * self.H(x)[:, :, None] * self.direction[None, None, :]

    def E_jacobian(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, float))
        if self.kind == "uniform":
            # E_j = (ik/2) eps_jab H_a (x_b - o_b)
            J = 0.5j * self.k * np.einsum("jab,a->jb", LEVI_CIVITA, self.amplitude)
            return np.tile(J, (len(x), 1, 1))
        return 1j * self.k * self.E(x)[:, :, None] * self.direction[None, None, :]

    def norms(self, centre, radius) -> dict:
        """Sup norms over the ball |x - centre| <= radius:
        H0_W2inf = sup(|H0| + |DH0| + |D2 H0|), E0_W1inf = sup(|E0| + |DE0|)."""
        a = np.linalg.norm(self.amplitude)
        k = self.k
        if self.kind == "plane":
            return {"H0_W2inf": a * (1 + k + k * k), "E0_W1inf": a * (1 + k)}
        reach = np.linalg.norm(np.asarray(centre, float) - self.origin) + radius
        # |DE0| is the Frobenius norm of (k/2) [H0]_x, which is k |H0| / sqrt(2)
        return {"H0_W2inf": a, "E0_W1inf": 0.5 * k * a * reach + k * a / math.sqrt(2)}


@dataclass(frozen=True)
class FieldPrediction:
    H_delta: np.ndarray
    terms: dict
    residual_bound: float = float("nan")


# --------------------------------------------------------------- kernels


def _offset(x, placement: ObjectPlacement, guard=True):
    x = np.asarray(x, float)
    d = x - placement.centre
    r = float(np.linalg.norm(d))
    if r == 0:
        raise ValidityError("observation point coincides with the object centre")
    if guard and r < VALIDITY_RADIUS * placement.alpha:
        raise ValidityError(f"|x - z| = {r:.3g} is inside the validity radius {VALIDITY_RADIUS} alpha")
    return d, r


def _finish(terms, bound):
    total = np.zeros(3, complex)
    for v in terms.values():
        total = total + v
    return FieldPrediction(H_delta=total, terms=terms, residual_bound=bound)


def _nan_if_none(value):
    return float("nan") if value is None else float(value)


def hdelta_main(x, placement: ObjectPlacement, bundle: TensorBundle, bg: BackgroundField,
                residual: float | None = None) -> FieldPrediction:
    """Three-term expansion in A, B (gradient of G), C (Hessian with two
    Levi-Civita symbols) and N (Hessian plus k^2 G)."""
    _offset(x, placement)
    k = bg.k
    z = placement.centre
    g = greens_eval(x, z, k)
    H0 = bg.H(z)[0]
    E0 = bg.E(z)[0]
    A, B, C, N = (np.asarray(t) for t in (bundle.A, bundle.B, bundle.C, bundle.N))
    terms = {
        "A": -1j * k * np.cross(g.grad, A @ H0),
        "B": -1j * k * np.cross(g.grad, B @ E0),
        "C": np.einsum("lm,jls,msi,i->j", g.hess, LEVI_CIVITA, C, H0),
        "N": (g.hess + k * k * g.value * np.eye(3)) @ (N @ H0),
    }
    return _finish(terms, _nan_if_none(residual))


def _shells(d, r, k, M, v_ab, H0):
    """The r^-3, r^-2 and r^-1 shells with M H0 and the grouped vector v_ab = A H0 + B E0."""
    rh = d / r
    mh = M @ H0
    dip = 3 * rh * (rh @ mh) - mh
    phase = np.exp(1j * k * r) / (4 * math.pi)
    cross = np.cross(rh, v_ab)
    return {
        "r3": phase / r**3 * dip,
        "r2": -phase * 1j * k / r**2 * (dip - cross),
        "r1": -phase * k * k / r * (np.cross(rh, np.cross(rh, mh)) - cross),
    }


def hdelta_alt(x, placement: ObjectPlacement, bundle: TensorBundle, bg: BackgroundField,
               residual: float | None = None) -> FieldPrediction:
    """Shell form in M = N - C_check with A H0 + B E0 grouped; the symmetric
    part of C is left out (it belongs to the remainder)."""
    d, r = _offset(x, placement)
    z = placement.centre
    H0 = bg.H(z)[0]
    E0 = bg.E(z)[0]
    v = np.asarray(bundle.A) @ H0 + np.asarray(bundle.B) @ E0
    return _finish(_shells(d, r, bg.k, np.asarray(bundle.M), v, H0), _nan_if_none(residual))


def _dipole(x, placement, M, H0):
    d, r = _offset(x, placement, guard=False)
    rh = d / r
    mh = np.asarray(M) @ np.asarray(H0, complex)
    return (3 * rh * (rh @ mh) - mh) / (4 * math.pi * r**3)


def hdelta_quasistatic(x, placement: ObjectPlacement, M, H0_at_z) -> np.ndarray:
    """(1 / (4 pi r^3)) (3 r^ (r^ . M H0) - M H0)."""
    return _dipole(x, placement, M, H0_at_z)


def hdelta_eddy(x, placement: ObjectPlacement, M, H0_at_z) -> np.ndarray:
    """Eddy-current response; the same dipole kernel with the eddy-current M."""
    return _dipole(x, placement, M, H0_at_z)


def hdelta_smallk_dielectric(x, placement: ObjectPlacement, T_mu, T_eps, bg: BackgroundField) -> np.ndarray:
    """Shell form with the permeability tensor on H0 and the permittivity tensor on E0.

    Only for non-conducting objects, so T_eps must be real.
    """
    T_eps = np.asarray(T_eps)
    if np.abs(T_eps.imag).max() > 1e-12 * max(np.abs(T_eps).max(), 1e-300):
        raise UsageError("the small-k dielectric form needs a non-conducting object (real eps_r tensor)")
    return _small(x, placement, T_mu, T_eps, bg)


def hdelta_smallalpha(x, placement: ObjectPlacement, T_mu, T_eps, bg: BackgroundField) -> np.ndarray:
    """Same shells for small objects; conduction enters through a complex eps_r tensor."""
    return _small(x, placement, T_mu, T_eps, bg)


def _small(x, placement, T_mu, T_eps, bg):
    d, r = _offset(x, placement)
    z = placement.centre
    H0 = bg.H(z)[0]
    v = np.asarray(T_eps) @ bg.E(z)[0]
    shells = _shells(d, r, bg.k, np.asarray(T_mu), v, H0)
    return shells["r3"] + shells["r2"] + shells["r1"]


def residual_bound(placement: ObjectPlacement, cs: ContrastSet, k: float, bg_norms: dict, C: float = 1.0) -> float:
    """C (alpha^4 |H0|_{W2,inf} + alpha^4 k (|eps_r - 1| + alpha k^2 |1 - 1/eps_r|) |E0|_{W1,inf})."""
    h_norm = bg_norms.get("H0_W2inf", 0.0)
    e_norm = bg_norms.get("E0_W1inf", 0.0)
    if h_norm < 0 or e_norm < 0:
        raise ValueError("norms must be non-negative")
    if not C > 0:
        raise ValueError("calibration constant must be positive")
    a4 = placement.alpha**4
    eps = complex(cs.eps_r)
    e_term = 0.0
    if e_norm > 0:
        e_term = a4 * k * (abs(eps - 1) + placement.alpha * k * k * abs(1 - 1 / eps)) * e_norm
    return float(C * (a4 * h_norm + e_term))


# ------------------------------------------------- volume representation


def _ball_rule(order: int, skin: float):
    """Nodes (n, 3) and weights on the unit ball: Gauss-Legendre in r on panels
    refined towards r = 1 over the depth `skin`, Gauss in cos(theta), uniform in phi."""
    gl_x, gl_w = np.polynomial.legendre.leggauss(order)
    if skin < 0.2:
        depth = min(1.0, 20 * skin)
        edges = [0.0, 1 - depth] + list(1 - depth + depth * np.linspace(0, 1, 11)[1:])
    else:
        edges = [0.0, 0.5, 1.0]
    r_nodes, r_w = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        r_nodes.append(0.5 * (b - a) * gl_x + 0.5 * (a + b))
        r_w.append(0.5 * (b - a) * gl_w)
    r = np.concatenate(r_nodes)
    wr = np.concatenate(r_w) * r**2
    ct, wt = np.polynomial.legendre.leggauss(order)
    n_phi = 2 * order
    phi = 2 * math.pi * np.arange(n_phi) / n_phi
    wp = np.full(n_phi, 2 * math.pi / n_phi)
    R, CT, PH = np.meshgrid(r, ct, phi, indexing="ij")
    W = wr[:, None, None] * wt[None, :, None] * wp[None, None, :]
    st = np.sqrt(1 - CT**2)
    pts = np.stack([R * st * np.cos(PH), R * st * np.sin(PH), R * CT], axis=-1)
    return pts.reshape(-1, 3), W.ravel()


def _volume_integral(x, interior, cs, k, order, skin):
    pts, w = _ball_rule(order, skin)
    y = interior.centre + interior.alpha * pts
    w = w * interior.alpha**3
    H = interior.H(y)
    E = interior.E(y)
    # G, grad_x G and D^2 G as functions of x - y
    g, grad, hess = greens_batch(np.broadcast_to(x, y.shape) - y, np.zeros(3), k)
    eps, mu = complex(cs.eps_r), cs.mu_r
    t_e = -1j * k * (eps - 1) * np.einsum("n,nk->k", w, np.cross(grad, E))
    t_g = k * k * (mu - 1) * np.einsum("n,n,nk->k", w, g, H)
    t_h = (mu - 1) * np.einsum("n,njk,nk->j", w, hess, H)
    return {"E": t_e, "G": t_g, "D2G": t_h}


def hdelta_volume_integral(x, placement: ObjectPlacement, interior, cs: ContrastSet, k: float,
                           quadrature: int = 16, tol: float = 1e-6) -> FieldPrediction:
    """H_delta(x) from the volume integrals of the interior fields over the ball B_alpha.

    `interior` needs H(y), E(y), alpha and centre (see oracles.sphere_interior_fields).
    The rule is rerun with doubled order; a relative change above `tol` raises
    QuadratureError carrying that change as the tail estimate.
    """
    x = np.asarray(x, float)
    centre = np.asarray(interior.centre, float)
    if np.linalg.norm(x - centre) <= interior.alpha * (1 + 1e-9):
        raise ValidityError("observation point must lie outside the object")
    if not np.allclose(centre, placement.centre) or not math.isclose(interior.alpha, placement.alpha):
        raise UsageError("interior fields and placement disagree")
    kappa = getattr(getattr(interior, "params", None), "kappa", 0)
    skin = 1 / abs(complex(kappa).imag) if complex(kappa).imag > 0 else 1.0
    coarse = _volume_integral(x, interior, cs, k, quadrature, skin)
    fine = _volume_integral(x, interior, cs, k, 2 * quadrature, skin)
    total_c = sum(coarse.values())
    total_f = sum(fine.values())
    scale = np.linalg.norm(total_f)
    change = float(np.linalg.norm(total_f - total_c) / scale) if scale > 0 else 0.0
    if change > tol:
        raise QuadratureError(f"volume quadrature changed by {change:.2e} on refinement", change)
    return _finish(fine, change)
