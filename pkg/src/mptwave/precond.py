"""Multigrid preconditioners for the edge and nodal systems.

The edge preconditioner is the auxiliary space (Hiptmair-Xu) construction:
a Gauss-Seidel smoother on the edge space plus algebraic multigrid
corrections on nodal gradients and on interpolated nodal vector fields.
It is built from a real symmetric positive definite surrogate of the system
matrix and applied to real and imaginary parts separately.
"""

from __future__ import annotations

import numpy as np
import pyamg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from pyamg.relaxation.relaxation import gauss_seidel

MAX_COARSE = 300


def _amg(matrix):
    return pyamg.smoothed_aggregation_solver(sp.csr_matrix(matrix), max_coarse=MAX_COARSE,
                                             strength=("symmetric", {"theta": 0.0}))


def _cycle(ml, lvl, b):
    levels = ml.levels
    if lvl == len(levels) - 1:
        return np.asarray(ml.coarse_solver(levels[-1].A, b)).reshape(b.shape)
    level = levels[lvl]
    x = np.zeros_like(b)
    level.presmoother(level.A, x, b)
    x += level.P @ _cycle(ml, lvl + 1, level.R @ (b - level.A @ x))
    level.postsmoother(level.A, x, b)
    return x


def _vcycle(ml, r):
    """One V-cycle (zero initial guess) for each column of a real (n, k) array."""
    out = np.empty_like(r)
    for j in range(r.shape[1]):
        out[:, j] = _cycle(ml, 0, np.ascontiguousarray(r[:, j]))
    return out


def _gs(matrix, x, b, sweep):
    for j in range(x.shape[1]):
        col = np.ascontiguousarray(x[:, j])
        gauss_seidel(matrix, col, np.ascontiguousarray(b[:, j]), iterations=1, sweep=sweep)
        x[:, j] = col
    return x


def _split(r):
    """Complex or real vector -> real (n, 1 or 2) array."""
    r = np.ravel(r)
    if np.iscomplexobj(r):
        return np.column_stack([r.real, r.imag])
    return r[:, None].astype(float)


def _join(x, like):
    return x[:, 0] + 1j * x[:, 1] if x.shape[1] == 2 else x[:, 0].astype(like.dtype)


class AuxiliarySpacePreconditioner:
    """Symmetric multiplicative HX cycle for curl-curl + mass surrogates.

    surrogate: real SPD edge matrix; gradient: coefficients of gradients of
    the nodal scalar space; interpolation: coefficients of nodal vector fields.
    """

    def __init__(self, surrogate, gradient, interpolation):
        self.matrix = sp.csr_matrix(surrogate)
        self.gradient = sp.csr_matrix(gradient)
        self.interpolation = sp.csr_matrix(interpolation)
        G, P = self.gradient, self.interpolation
        self.grad_amg = _amg(G.T @ self.matrix @ G)
        self.vector_amg = _amg(P.T @ self.matrix @ P)

    @property
    def shape(self):
        return self.matrix.shape

    def __call__(self, rhs):
        # real and imaginary parts are carried as two real columns
        r = _split(rhs)
        A, G, P = self.matrix, self.gradient, self.interpolation
        x = _gs(A, np.zeros_like(r), r, "forward")
        x += G @ _vcycle(self.grad_amg, G.T @ (r - A @ x))
        x += P @ _vcycle(self.vector_amg, P.T @ (r - A @ x))
        x += G @ _vcycle(self.grad_amg, G.T @ (r - A @ x))
        x = _gs(A, x, r, "backward")
        return _join(x, np.asarray(rhs)).reshape(np.shape(rhs))

    def operator(self, dtype=complex):
        return spla.LinearOperator(self.shape, self, dtype=dtype)


class NodalAMGPreconditioner:
    """One smoothed-aggregation V-cycle on a real SPD nodal surrogate."""

    def __init__(self, surrogate):
        self.ml = _amg(surrogate)
        self.shape = surrogate.shape

    def __call__(self, rhs):
        return _join(_vcycle(self.ml, _split(rhs)), np.asarray(rhs)).reshape(np.shape(rhs))

    def operator(self, dtype=complex):
        return spla.LinearOperator(self.shape, self, dtype=dtype)
