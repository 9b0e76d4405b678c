"""Finite element solvers for the unit-scale transmission problems.

Vector problems use lowest-order Nedelec (Whitney) edge elements, the scalar
problem uses continuous P1 elements.  All bilinear forms are symmetric (not
Hermitian), so the assembled complex matrices are complex symmetric.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import ContrastSet
from .mesh import INTERIOR, Mesh
from .precond import AuxiliarySpacePreconditioner, NodalAMGPreconditioner
from .spaces import (EDGE_FAMILIES, QUAD_BARY, QUAD_WEIGHTS, EdgeSpace, boundary_node_mass, locate_points,
                     node_stiffness, quadrature_points)

log = logging.getLogger("mptwave.solver")

# below this k*alpha the exterior wave term is dropped (static decay condition)
STATIC_KALPHA = 1e-6

OUTER_CONDITIONS = ("dipole", "absorbing", "natural", "pec")


class SolverError(RuntimeError):
    def __init__(self, message, residuals=()):
        super().__init__(message)
        self.residuals = list(residuals)


class IllConditionedError(SolverError):
    pass


@dataclass(frozen=True)
class SolverParams:
    """Linear solver and discretisation settings.

    `method` is "iterative" (multigrid-preconditioned GMRES, falling back to
    sparse LU on failure) or "direct" (sparse LU with iterative refinement).
    `outer_condition` selects the condition on the truncation sphere:
    "dipole" (exact for the dipole field), "absorbing" (first order),
    "natural" (n x curl = 0) or "pec" (zero tangential trace).
    `edge_family` is "complete" (all linear fields per cell, two unknowns
    per edge) or "whitney" (one unknown per edge).
    """

    tol: float = 1e-10
    max_iter: int = 500
    regularization: float = 1e-8
    quadrature_order: int = 2
    method: str = "iterative"
    outer_condition: str = "dipole"
    edge_family: str = "complete"

    def __post_init__(self):
        if not 0 < self.tol <= 1e-3:
            raise ValueError("tolerance must lie in (0, 1e-3]")
        if self.quadrature_order < 2:
            raise ValueError("quadrature order must be at least 2")
        if self.method not in ("direct", "iterative"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.outer_condition not in OUTER_CONDITIONS:
            raise ValueError(f"unknown outer condition {self.outer_condition!r}")
        if self.edge_family not in EDGE_FAMILIES:
            raise ValueError(f"unknown edge family {self.edge_family!r}")
        if self.regularization < 0:
            raise ValueError("regularization must be non-negative")


@dataclass(frozen=True, eq=False)
class DiscreteVectorField:
    space: EdgeSpace
    coefficients: np.ndarray
    index: int
    problem: str
    contrasts: ContrastSet
    k_alpha: float
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coefficients.setflags(write=False)

    @property
    def mesh(self) -> Mesh:
        return self.space.mesh

    def cell_coefficients(self, cells=None) -> np.ndarray:
        dofs = self.space.cell_dofs if cells is None else self.space.cell_dofs[cells]
        return self.coefficients[dofs]

    def curl(self, cells=None) -> np.ndarray:
        """Elementwise-constant curl, shape (n, 3)."""
        curls = self.space.curls if cells is None else self.space.curls[cells]
        return np.einsum("ce,cek->ck", self.cell_coefficients(cells), curls)

    def values_at(self, cells, bary) -> np.ndarray:
        """Field at barycentric points: cells (n,), bary (n, q, 4) -> (n, q, 3)."""
        w = self.space.values(cells, bary)
        return np.einsum("ce,cqek->cqk", self.cell_coefficients(cells), w)

    def evaluate(self, points) -> np.ndarray:
        """Point evaluation (slow path, for diagnostics and tests)."""
        points = np.atleast_2d(points)
        cells, bary = locate_points(self.mesh, points)
        return self.values_at(cells, bary[:, None, :])[:, 0]


@dataclass(frozen=True, eq=False)
class DiscreteScalarField:
    mesh: Mesh
    coefficients: np.ndarray
    index: int
    eps_r: complex
    problem: str = "vartheta"
    diagnostics: dict = field(default_factory=dict)

    def gradient(self, cells=None) -> np.ndarray:
        g = self.mesh.barycentric_gradients if cells is None else self.mesh.barycentric_gradients[cells]
        c = self.mesh.cells if cells is None else self.mesh.cells[cells]
        return np.einsum("cj,cjk->ck", self.coefficients[c], g)


# --------------------------------------------------------- linear solves


def dipole_impedance(k_alpha: float, radius: float) -> complex:
    """beta with n x curl(theta) = beta theta_T for an outgoing magnetic dipole field.

    beta = -(d/dr)(r h1(kr)) / (r h1(kr)) at r = radius; beta -> 1/radius as k -> 0.
    """
    if k_alpha < STATIC_KALPHA:
        return 1.0 / radius
    x = k_alpha * radius
    return -1j * k_alpha + 1j / (radius * (x + 1j))


def outer_beta(params: SolverParams, k_alpha: float, radius: float) -> complex:
    if params.outer_condition == "dipole":
        return dipole_impedance(k_alpha, radius)
    if params.outer_condition == "absorbing":
        return -1j * k_alpha
    return 0.0


class LinearSystem:
    """Sparse system solved for several right-hand sides.

    The iterative path is restarted GMRES with the preconditioner returned by
    `preconditioner(free)` (a callable taking the mask of free unknowns), or
    incomplete LU when none is given.  If it fails to reach the tolerance the
    system falls back to sparse LU with iterative refinement.
    """

    def __init__(self, matrix: sp.spmatrix, params: SolverParams, fixed=None, label="system",
                 preconditioner=None):
        self.params = params
        self.label = label
        n = matrix.shape[0]
        self.free = np.ones(n, bool)
        if fixed is not None:
            self.free[fixed] = False
        A = sp.csc_matrix(matrix)
        if not self.free.all():
            A = A[self.free][:, self.free].tocsc()
        if np.iscomplexobj(A.data) and not np.any(A.data.imag):
            A = sp.csc_matrix(A.real)
        self.matrix = A
        self._csr = A.tocsr()
        self._lu = None
        self._precond = None
        self._precond_factory = preconditioner
        self._condition = None
        self.setup_seconds = 0.0

    @property
    def lu(self):
        if self._lu is None:
            t0 = time.perf_counter()
            try:
                self._lu = spla.splu(self.matrix, permc_spec="COLAMD")
            except RuntimeError as exc:  # exactly singular
                raise IllConditionedError(f"{self.label}: singular matrix ({exc})") from exc
            self.setup_seconds += time.perf_counter() - t0
        return self._lu

    @property
    def preconditioner(self):
        if self._precond is None:
            t0 = time.perf_counter()
            if self._precond_factory is not None:
                self._precond = self._precond_factory(self.free).operator()
            else:
                try:
                    ilu = spla.spilu(self.matrix.astype(complex), drop_tol=1e-5, fill_factor=20)
                except RuntimeError as exc:
                    raise IllConditionedError(f"{self.label}: incomplete factorisation failed ({exc})") from exc
                self._precond = spla.LinearOperator(self.matrix.shape, ilu.solve, dtype=complex)
            self.setup_seconds += time.perf_counter() - t0
        return self._precond

    def condition_estimate(self) -> float:
        """1-norm condition estimate ||A|| ||A^-1||, with A^-1 taken from the LU
        factors when present and from the preconditioner otherwise."""
        if self._condition is not None:
            return self._condition
        if self.matrix.shape[0] == 0:
            return 1.0
        norm_a = spla.onenormest(self.matrix)
        if self._lu is not None:
            lu = self._lu
            inv = spla.LinearOperator(self.matrix.shape, matvec=lu.solve,
                                      rmatvec=lambda y: lu.solve(y, trans="H"), dtype=self.matrix.dtype)
        elif self._precond is not None:
            # the preconditioners are real symmetric, so their adjoint is themselves
            pc = self._precond
            inv = spla.LinearOperator(self.matrix.shape, matvec=pc.matvec, rmatvec=pc.matvec, dtype=complex)
        else:
            return float("nan")
        self._condition = float(norm_a * spla.onenormest(inv))
        return self._condition

    def solve(self, rhs: np.ndarray):
        """Solve and return (solution, diagnostics)."""
        b_full = np.asarray(rhs)
        x_full = np.zeros(len(b_full), complex)
        b = b_full[self.free]
        t0 = time.perf_counter()
        bnorm = np.linalg.norm(b)
        if bnorm == 0:
            return x_full, dict(iterations=0, residual=0.0, seconds=0.0, method="trivial")
        history = []
        method = self.params.method
        x = None
        iterations = 0
        if method == "iterative":
            x, history = self._gmres(b)
            iterations = len(history)
            if x is None:
                log.warning("solver=%s event=gmres_failed residual=%.3e fallback=direct", self.label,
                            history[-1] if history else np.nan)
                method = "direct"
        if x is None:
            x = self._lu_solve(b)
            res = np.linalg.norm(b - self.matrix @ x) / bnorm
            history.append(res)
            refinements = 0
            while res > self.params.tol and refinements < 5:
                x = x + self._lu_solve(b - self.matrix @ x)
                res = np.linalg.norm(b - self.matrix @ x) / bnorm
                history.append(res)
                refinements += 1
            iterations += refinements + 1
        res = float(np.linalg.norm(b - self.matrix @ x) / bnorm)
        if not res <= self.params.tol:
            raise SolverError(f"{self.label}: residual {res:.3e} above tolerance {self.params.tol:.1e}", history)
        x_full[self.free] = x
        diag = dict(iterations=iterations, residual=res, seconds=time.perf_counter() - t0, method=method,
                    setup_seconds=self.setup_seconds)
        return x_full, diag

    def _lu_solve(self, b):
        lu = self.lu
        if np.iscomplexobj(b) and not np.iscomplexobj(self.matrix.data):
            return lu.solve(np.ascontiguousarray(b.real)) + 1j * lu.solve(np.ascontiguousarray(b.imag))
        return lu.solve(b.astype(complex) if np.iscomplexobj(self.matrix.data) else b)

    def _gmres(self, b):
        history = []
        try:
            precond = self.preconditioner
        except IllConditionedError:
            return None, [np.nan]
        bnorm = np.linalg.norm(b)
        A = self._csr

        def callback(rk):
            history.append(float(rk))

        restart = min(self.params.max_iter, 200)
        cycles = -(-self.params.max_iter // restart)
        # the inner tolerance is tighter than the target so the true residual passes
        x, info = spla.gmres(A, b.astype(complex), M=precond, rtol=self.params.tol * 0.1, atol=0.0,
                             restart=restart, maxiter=cycles, callback=callback, callback_type="pr_norm")
        res = np.linalg.norm(b - A @ x) / bnorm
        history.append(float(res))
        if res > self.params.tol:
            return None, history
        return x, history


def _log_solve(problem, index, n, diag):
    log.info("solve problem=%s index=%d unknowns=%d method=%s iterations=%d residual=%.3e "
             "condition_estimate=%.3e divergence=%.3e seconds=%.3f", problem, index, n, diag["method"],
             diag["iterations"], diag["residual"], diag.get("condition_estimate", np.nan),
             diag.get("divergence", np.nan), diag["seconds"])


# ---------------------------------------------------------- theta problems


AXES = np.eye(3)


def _check_index(i):
    if i not in (1, 2, 3):
        raise ValueError(f"axis index must be 1, 2 or 3, got {i}")


def _interior_cells(mesh: Mesh) -> np.ndarray:
    return np.flatnonzero(mesh.regions == INTERIOR)


class ThetaProblem:
    """Assembled vector transmission problem for one set of contrasts.

    problem is "full", "eddy" or "static".  The system matrix is
    curl-curl(1/mu~) - mass(interior_shift in B, exterior_shift outside)
    + beta * tangential mass on the truncation sphere, plus a small real
    gauge shift on every cell.  The right-hand side for axis i is
    source * int_B (e_i x xi) . v + 2 (1 - 1/mu_r) int_B e_i . curl v.
    """

    def __init__(self, mesh: Mesh, cs: ContrastSet, problem: str, params: SolverParams):
        self.mesh, self.cs, self.problem, self.params = mesh, cs, problem, params
        interior = mesh.regions == INTERIOR
        self.interior_cells = np.flatnonzero(interior)
        mu_r = cs.mu_r
        if problem == "full":
            k_alpha = cs.k_alpha if cs.k_alpha >= STATIC_KALPHA else 0.0
            interior_shift = k_alpha**2 + cs.nu  # = (k alpha)^2 eps_r
            exterior_shift = k_alpha**2
            source = cs.nu
        elif problem == "eddy":
            k_alpha = 0.0
            interior_shift = 1j * cs.nu_i
            exterior_shift = 0.0
            source = 1j * cs.nu_i
        elif problem == "static":
            k_alpha = 0.0
            interior_shift = exterior_shift = source = 0.0
        else:
            raise ValueError(f"unknown problem {problem!r}")
        self.k_alpha = k_alpha
        self.source = source
        self.interior_shift = interior_shift
        self.exterior_shift = exterior_shift
        self.mu_jump = 1.0 - 1.0 / mu_r
        self.radius = mesh.truncation_radius
        self.beta = outer_beta(params, k_alpha, self.radius)

        inv_mu = np.where(interior, 1.0 / mu_r, 1.0)
        self.space = space = EdgeSpace(mesh, params.edge_family)
        self.stiffness = space.stiffness(inv_mu)
        shift = np.where(interior, interior_shift, exterior_shift)
        self.mass_shift = space.mass(shift)
        self.outer_mass = space.boundary_mass(mesh.outer_faces)
        self.gauge = params.regularization
        self.gauge_mass = space.mass(np.ones(mesh.n_cells))
        A = self.stiffness - self.mass_shift + self.beta * self.outer_mass + self.gauge * self.gauge_mass
        fixed = None
        if params.outer_condition == "pec":
            fixed = np.unique(space.face_dofs(mesh.outer_faces))
        self.matrix = A
        self._abs_shift = np.maximum(np.abs(shift), self.gauge)
        self.system = LinearSystem(A, params, fixed=fixed, label=f"theta-{problem}",
                                   preconditioner=self._preconditioner)

    def _preconditioner(self, free):
        """HX preconditioner built on the definite surrogate with |coefficients|."""
        space = self.space
        surrogate = (self.stiffness + abs(self.beta) * self.outer_mass + space.mass(self._abs_shift)).tocsr()
        grad = space.quadratic_gradient()
        interp = space.vector_interpolation()
        if not free.all():
            surrogate = surrogate[free][:, free]
            grad, interp = grad[free], interp[free]
        return AuxiliarySpacePreconditioner(surrogate, grad, interp)

    def rhs(self, i: int) -> np.ndarray:
        e = AXES[i - 1]
        b = np.zeros(self.space.n_dofs, complex)
        if self.source != 0:
            b += self.source * self.space.load(lambda x: np.cross(e, x), self.interior_cells)
        if self.mu_jump != 0:
            b += 2 * self.mu_jump * self.space.curl_load(e, self.interior_cells)
        return b

    def solve(self, i: int) -> DiscreteVectorField:
        _check_index(i)
        b = self.rhs(i)
        x, diag = self.system.solve(b)
        if diag["method"] != "trivial":
            diag["condition_estimate"] = self.system.condition_estimate()
        diag["divergence"] = self.weak_divergence(x)
        _log_solve(self.problem, i, self.space.n_dofs, diag)
        return DiscreteVectorField(space=self.space, coefficients=x, index=i, problem=self.problem,
                                   contrasts=self.cs, k_alpha=self.k_alpha, diagnostics=diag)

    def solve_all(self):
        return [self.solve(i) for i in (1, 2, 3)]

    def weak_divergence(self, x) -> float:
        """max_j |int theta . grad(phi_j)| over exterior vertices, relative to ||M theta||."""
        mesh = self.mesh
        if not np.any(x):
            return 0.0
        ext_cells = mesh.regions != INTERIOR
        mass = self.space.mass(ext_cells.astype(float))
        mx = mass @ x
        div = self.space.gradient().T @ mx
        interior_nodes = np.unique(mesh.cells[mesh.regions == INTERIOR])
        outer_nodes = np.unique(mesh.outer_faces)
        div[interior_nodes] = 0
        div[outer_nodes] = 0
        scale = np.linalg.norm(mx)
        return float(np.abs(div).max() / scale) if scale > 0 else 0.0


def solve_theta_full(i: int, cs: ContrastSet, mesh: Mesh, params: SolverParams = SolverParams()) -> DiscreteVectorField:
    if cs.k_alpha < 0:
        raise ValueError("k_alpha must be non-negative")
    return ThetaProblem(mesh, cs, "full", params).solve(i)


def solve_theta_eddy(i: int, nu_i: float, mu_r: float, mesh: Mesh,
                     params: SolverParams = SolverParams()) -> DiscreteVectorField:
    if nu_i < 0:
        raise ValueError("nu_i must be non-negative")
    return ThetaProblem(mesh, ContrastSet.eddy(nu_i, mu_r), "eddy", params).solve(i)


def solve_theta_static(i: int, mu_r: float, mesh: Mesh, params: SolverParams = SolverParams()) -> DiscreteVectorField:
    if not mu_r > 0:
        raise ValueError("mu_r must be positive")
    return ThetaProblem(mesh, ContrastSet.eddy(0.0, mu_r), "static", params).solve(i)


# ------------------------------------------------------- scalar problems


class VarthetaProblem:
    """P1 discretisation of div(eps~ grad vartheta) = 0 with flux jump n . e_i on
    the interface and the dipole Robin condition d(vartheta)/dr = -2 vartheta / R."""

    def __init__(self, mesh: Mesh, eps_r: complex, params: SolverParams = SolverParams()):
        self.mesh, self.eps_r, self.params = mesh, complex(eps_r), params
        interior = mesh.regions == INTERIOR
        self.interior_cells = np.flatnonzero(interior)
        coef = np.where(interior, self.eps_r, 1.0)
        R = mesh.truncation_radius
        self.matrix = node_stiffness(mesh, coef) + (2.0 / R) * boundary_node_mass(mesh, mesh.outer_faces)
        surrogate = node_stiffness(mesh, np.abs(coef)) + (2.0 / R) * boundary_node_mass(mesh, mesh.outer_faces)
        self.system = LinearSystem(self.matrix, params, label="vartheta",
                                   preconditioner=lambda free: NodalAMGPreconditioner(surrogate))

    def load(self, i: int) -> np.ndarray:
        """b_i = int_B e_i . grad(phi_j)."""
        mesh = self.mesh
        cells = self.interior_cells
        g = mesh.barycentric_gradients[cells][:, :, i - 1] * mesh.volumes[cells, None]
        out = np.zeros(mesh.n_vertices, complex)
        np.add.at(out, mesh.cells[cells], g)
        return out

    def solve(self, i: int) -> DiscreteScalarField:
        _check_index(i)
        x, diag = self.system.solve(-self.load(i))
        _log_solve("vartheta", i, self.mesh.n_vertices, diag)
        return DiscreteScalarField(mesh=self.mesh, coefficients=x, index=i, eps_r=self.eps_r, diagnostics=diag)


def solve_vartheta(i: int, eps_r: complex, mesh: Mesh, params: SolverParams = SolverParams()) -> DiscreteScalarField:
    if abs(complex(eps_r) + 2) < 1e-12:
        raise IllConditionedError("eps_r = -2 is a plasmonic resonance of the scalar problem")
    return VarthetaProblem(mesh, eps_r, params).solve(i)


def solve_phi_eddy(i: int, mesh: Mesh, params: SolverParams = SolverParams()) -> DiscreteScalarField:
    """Scalar potential psi with phi_i = grad(psi) for the eddy-current limit.

    Inside B the curl-free solution is phi_i = -e_i, so psi = -xi_i on every
    vertex of B; outside, psi is harmonic and decays (dipole Robin condition).
    """
    _check_index(i)
    interior = mesh.regions == INTERIOR
    R = mesh.truncation_radius
    K = node_stiffness(mesh, (~interior).astype(float)) + (2.0 / R) * boundary_node_mass(mesh, mesh.outer_faces)
    fixed = np.unique(mesh.cells[interior])
    values = np.zeros(mesh.n_vertices, complex)
    values[fixed] = -mesh.vertices[fixed, i - 1]
    system = LinearSystem(K, params, fixed=fixed, label="phi-eddy",
                          preconditioner=lambda mask: NodalAMGPreconditioner(K.tocsr()[mask][:, mask]))
    x, diag = system.solve(-(K @ values))
    x[fixed] = values[fixed]
    _log_solve("phi-eddy", i, mesh.n_vertices, diag)
    return DiscreteScalarField(mesh=mesh, coefficients=x, index=i, eps_r=complex(np.inf), problem="phi-eddy",
                               diagnostics=diag)


# ------------------------------------------------------------ integrals


def field_integrals(fld: DiscreteVectorField, kind: str, m: int | None = None,
                    include_offset: bool = True) -> np.ndarray:
    """Integrals over B of the solved field (interior cells only).

    kind "moment":         int_B (e_i x xi + theta_i)
    kind "curl_moment":    int_B (e_i + curl(theta_i) / 2)
    kind "cross_moment_m": int_B xi_m (e_i x xi + theta_i), needs m in 1..3
    With include_offset=False the e_i x xi / e_i terms are left out.
    """
    mesh = fld.mesh
    cells = _interior_cells(mesh)
    vol = mesh.volumes[cells]
    e = AXES[fld.index - 1]
    if kind == "curl_moment":
        out = 0.5 * np.einsum("ck,c->k", fld.curl(cells), vol)
        if include_offset:
            out = out + e * vol.sum()
        return out
    if kind not in ("moment", "cross_moment_m"):
        raise ValueError(f"unknown integral kind {kind!r}")
    pts = quadrature_points(mesh, cells)
    vals = fld.values_at(cells, QUAD_BARY)
    if include_offset:
        vals = vals + np.cross(e, pts)
    if kind == "moment":
        weight = np.ones(pts.shape[:2])
    else:
        if m not in (1, 2, 3):
            raise ValueError("cross_moment_m needs m in 1..3")
        weight = pts[..., m - 1]
    return np.einsum("cqk,cq,q,c->k", vals, weight, QUAD_WEIGHTS, vol)
