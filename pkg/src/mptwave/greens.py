"""Free-space Helmholtz Green's function with gradient and Hessian."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MIN_DISTANCE = 1e-12


class SingularityError(ValueError):
    pass


@dataclass(frozen=True)
class GreensDerivatives:
    value: complex
    grad: np.ndarray
    hess: np.ndarray


def greens_batch(x, z, k: float):
    """Vectorised G_k(x, z) for an (n, 3) array of points x.

    Returns (value (n,), grad (n, 3), hess (n, 3, 3)), derivatives taken in x.
    """
    d = np.atleast_2d(np.asarray(x, float)) - np.asarray(z, float)
    r = np.linalg.norm(d, axis=1)
    if np.any(r < MIN_DISTANCE):
        raise SingularityError("Green's function evaluated at the source point")
    rhat = d / r[:, None]
    outer = rhat[:, :, None] * rhat[:, None, :]
    eye = np.eye(3)
    if k == 0:
        g = 1.0 / (4 * np.pi * r)
        grad = -rhat * (g / r)[:, None]
        hess = (g / r**2)[:, None, None] * (3 * outer - eye)
        return g.astype(complex), grad.astype(complex), hess.astype(complex)
    g = np.exp(1j * k * r) / (4 * np.pi * r)
    grad = rhat * (g * (1j * k - 1 / r))[:, None]
    # hess = G [(3/r^2 - 3ik/r - k^2) rr + (ik/r - 1/r^2) I]
    c_rr = g * (3 / r**2 - 3j * k / r - k**2)
    c_id = g * (1j * k / r - 1 / r**2)
    hess = c_rr[:, None, None] * outer + c_id[:, None, None] * eye
    return g, grad, hess


def greens_eval(x, z, k: float) -> GreensDerivatives:
    """Value, gradient and Hessian of exp(ik|x-z|)/(4 pi |x-z|) at x."""
    g, grad, hess = greens_batch(np.asarray(x, float)[None, :], z, k)
    return GreensDerivatives(value=complex(g[0]), grad=grad[0], hess=hess[0])


def greens_check_fd(x, z, k: float, h: float) -> float:
    """Max relative deviation between analytic derivatives and central differences.

    The gradient is checked against differences of the value and the Hessian
    against differences of the analytic gradient.
    """
    x = np.asarray(x, float)
    z = np.asarray(z, float)
    r = np.linalg.norm(x - z)
    if r < MIN_DISTANCE:
        raise SingularityError("x coincides with z")
    if not 0 < h < r / 10:
        raise ValueError(f"step h={h} must lie in (0, r/10) with r={r}")
    ref = greens_eval(x, z, k)
    fd_grad = np.zeros(3, complex)
    fd_hess = np.zeros((3, 3), complex)
    for j in range(3):
        step = np.zeros(3)
        step[j] = h
        plus, minus = greens_eval(x + step, z, k), greens_eval(x - step, z, k)
        fd_grad[j] = (plus.value - minus.value) / (2 * h)
        fd_hess[:, j] = (plus.grad - minus.grad) / (2 * h)
    dev_grad = np.max(np.abs(fd_grad - ref.grad)) / np.max(np.abs(ref.grad))
    dev_hess = np.max(np.abs(fd_hess - ref.hess)) / np.max(np.abs(ref.hess))
    return float(max(dev_grad, dev_hess))
