"""Polarizability tensors assembled from solved unit-scale fields.

All integrals run over the unit-scale object B (or the truncated domain);
alpha only enters through the scaling prefactors.  Index order is (r, i) for
rank-2 and (m, s, i) for rank-3 tensors.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .core import LEVI_CIVITA, ContrastSet, Rank2TensorC, Rank3TensorC
from .fem import AXES, DiscreteScalarField, DiscreteVectorField, field_integrals
from .mesh import INTERIOR
from .spaces import QUAD_BARY, QUAD_WEIGHTS, boundary_node_mass, node_stiffness, quadrature_points

# contrasts above this size use the flux form of the scalar tensor
FLUX_FORM_CONTRAST = 1e4


class UsageError(ValueError):
    """Inputs that do not belong together (different meshes, solves or regimes)."""


# ------------------------------------------------------------ helpers


def _check_theta(fields) -> list:
    fields = list(fields)
    if len(fields) != 3:
        raise UsageError("need the three fields theta_1, theta_2, theta_3")
    if sorted(f.index for f in fields) != [1, 2, 3]:
        raise UsageError("fields must be the axis solutions 1, 2 and 3")
    fields.sort(key=lambda f: f.index)
    first = fields[0]
    for f in fields[1:]:
        if f.space is not first.space:
            raise UsageError("fields were solved on different meshes or spaces")
        if f.problem != first.problem or f.contrasts != first.contrasts:
            raise UsageError("fields come from different transmission problems")
    return fields


def theta_provenance(fields) -> str:
    f = fields[0]
    cs = f.contrasts
    return (f"theta:{f.problem}:mesh={id(f.mesh):x}:edges={f.mesh.n_edges}:mu_r={cs.mu_r!r}"
            f":nu={cs.nu!r}:k_alpha={f.k_alpha!r}")


def problem_coefficients(fld: DiscreteVectorField):
    """(interior shift, exterior shift, source) of the problem a field solves.

    Inside B: curl(curl(theta)/mu_r) = shift theta + source (e_i x xi).
    """
    cs = fld.contrasts
    if fld.problem == "full":
        ka2 = fld.k_alpha**2
        return ka2 + cs.nu, ka2, cs.nu
    if fld.problem == "eddy":
        return 1j * cs.nu_i, 0.0, 1j * cs.nu_i
    return 0.0, 0.0, 0.0


def _moment_matrix(fields, kind, m=None):
    """Column i holds the vector integral of field i."""
    return np.column_stack([field_integrals(f, kind, m) for f in fields])


def _interior(mesh):
    return np.flatnonzero(mesh.regions == INTERIOR)


# ------------------------------------------------------------- tensors


def assemble_A(theta_fields, cs: ContrastSet, k: float, alpha: float) -> Rank2TensorC:
    """A_ri = (i k alpha^4 (eps_r - 1) / 2) e_r . int_B (e_i x xi + theta_i).

    The prefactor is written as i alpha^2 nu / (2k) so the eddy-current
    contrasts (nu = i nu_i) carry over unchanged.
    """
    fields = _check_theta(theta_fields)
    if cs.nu == 0:
        return Rank2TensorC.zeros()
    if not k > 0:
        raise ValueError("k must be positive when nu != 0")
    pref = 1j * alpha**2 * cs.nu / (2 * k)
    return Rank2TensorC(pref * _moment_matrix(fields, "moment"), provenance=theta_provenance(fields))


def scalar_provenance(fields) -> str:
    f = fields[0]
    return f"scalar:{f.problem}:mesh={id(f.mesh):x}:eps_r={f.eps_r!r}"


def assemble_B(scalar_fields, eps_r: complex, alpha: float) -> Rank2TensorC:
    """Scalar (Polya-Szego) tensor from the vartheta or eddy-limit fields.

    vartheta: alpha^3 ((c - 1)|B| delta + (c - 1)^2 int_B e_r . grad(vartheta_i)),
    evaluated as a symmetric quadratic form; for |c| above FLUX_FORM_CONTRAST
    the discrete identity c b_r.x_i + J_ri = -|B| delta is used instead, which
    avoids the cancellation between the two terms.
    phi-eddy: alpha^3 (c - 1) int_B e_r . (e_i + grad psi_i).
    """
    fields = sorted(scalar_fields, key=lambda f: f.index)
    if [f.index for f in fields] != [1, 2, 3]:
        raise UsageError("need the three scalar solutions 1, 2 and 3")
    mesh = fields[0].mesh
    if any(f.mesh is not mesh or f.problem != fields[0].problem for f in fields):
        raise UsageError("scalar fields come from different meshes or problems")
    c = complex(eps_r)
    if c == 1:
        return Rank2TensorC.zeros()
    cells = _interior(mesh)
    vol = mesh.volumes[cells]
    volume = vol.sum()
    tag = scalar_provenance(fields)
    grads = np.stack([f.gradient(cells) for f in fields], axis=2)  # (nc, r, i)
    integral = np.einsum("cri,c->ri", grads, vol)
    if fields[0].problem == "phi-eddy":
        return Rank2TensorC(alpha**3 * (c - 1) * (volume * np.eye(3) + integral), provenance=tag)
    if fields[0].eps_r != c:
        raise UsageError(f"fields were solved for eps_r={fields[0].eps_r}, not {c}")
    if abs(c) <= FLUX_FORM_CONTRAST:
        sym = 0.5 * (integral + integral.T)
        return Rank2TensorC(alpha**3 * ((c - 1) * volume * np.eye(3) + (c - 1) ** 2 * sym), provenance=tag)
    # J_ri = (exterior stiffness + Robin) applied to x_i, tested with xi_r
    exterior = (mesh.regions != INTERIOR).astype(float)
    K = node_stiffness(mesh, exterior) + (2.0 / mesh.truncation_radius) * boundary_node_mass(mesh, mesh.outer_faces)
    X = np.column_stack([f.coefficients for f in fields])
    J = mesh.vertices.T @ (K @ X)
    J = 0.5 * (J + J.T)
    return Rank2TensorC(alpha**3 * (c - 1) / c * (volume * np.eye(3) - (c - 1) * J), provenance=tag)


def assemble_C(theta_fields, cs: ContrastSet, k: float, alpha: float) -> Rank3TensorC:
    """C_msi = -(k^2 alpha^5 (eps_r - 1)/2) e_s . int_B xi_m (e_i x xi + theta_i)
    = -(nu alpha^3 / 2) X_msi.  k is accepted for symmetry with assemble_A."""
    fields = _check_theta(theta_fields)
    if cs.nu == 0:
        return Rank3TensorC.zeros()
    X = np.stack([_moment_matrix(fields, "cross_moment_m", m) for m in (1, 2, 3)])
    return Rank3TensorC(-0.5 * cs.nu * alpha**3 * X, provenance=theta_provenance(fields))


def skew_decompose_C(C: Rank3TensorC):
    """Split C_msi = eps_msr Cc_ri + R_msi with Cc_ri = (1/2) eps_rms C_msi.

    The first part is the antisymmetric part of C in (m, s); R is the
    symmetric part.
    """
    data = np.asarray(C)
    check = 0.5 * np.einsum("rms,msi->ri", LEVI_CIVITA, data)
    rest = data - np.einsum("msr,ri->msi", LEVI_CIVITA, check)
    return Rank2TensorC(check, provenance=C.provenance), Rank3TensorC(rest, provenance=C.provenance)


def assemble_C_check_direct(theta_fields, cs: ContrastSet, alpha: float) -> Rank2TensorC:
    """Cc_ri = -(nu alpha^3 / 4) e_r . int_B xi x (theta_i + e_i x xi), from the field directly."""
    fields = _check_theta(theta_fields)
    if cs.nu == 0:
        return Rank2TensorC.zeros()
    mesh = fields[0].mesh
    cells = _interior(mesh)
    pts = quadrature_points(mesh, cells)
    w = QUAD_WEIGHTS[None, :] * mesh.volumes[cells, None]
    out = np.empty((3, 3), complex)
    for f in fields:
        v = f.values_at(cells, QUAD_BARY) + np.cross(AXES[f.index - 1], pts)
        out[:, f.index - 1] = np.einsum("cqk,cq->k", np.cross(pts, v), w)
    return Rank2TensorC(-0.25 * cs.nu * alpha**3 * out, provenance=theta_provenance(fields))


def assemble_N(theta_fields, mu_r: float, alpha: float) -> Rank2TensorC:
    """N_ri = alpha^3 (1 - 1/mu_r) e_r . int_B (e_i + curl(theta_i)/2)."""
    fields = _check_theta(theta_fields)
    jump = 1 - 1 / mu_r
    if jump == 0:
        return Rank2TensorC.zeros()
    return Rank2TensorC(alpha**3 * jump * _moment_matrix(fields, "curl_moment"),
                        provenance=theta_provenance(fields))


def mpt_column(theta: DiscreteVectorField, alpha: float) -> np.ndarray:
    """Column i of M = N - C_check from the single solve theta_i.

    Uses the direct C_check formula, so a sweep that needs only the diagonal
    entry M_ii costs one solve instead of three.
    """
    cs = theta.contrasts
    _, _, source = problem_coefficients(theta)
    mesh = theta.mesh
    cells = _interior(mesh)
    e = AXES[theta.index - 1]
    col = alpha**3 * (1 - 1 / cs.mu_r) * field_integrals(theta, "curl_moment")
    if source != 0:
        pts = quadrature_points(mesh, cells)
        w = QUAD_WEIGHTS[None, :] * mesh.volumes[cells, None]
        v = theta.values_at(cells, QUAD_BARY) + np.cross(e, pts)
        col = col + 0.25 * source * alpha**3 * np.einsum("cqk,cq->k", np.cross(pts, v), w)
    return col


def assemble_M(N: Rank2TensorC, C_check: Rank2TensorC) -> Rank2TensorC:
    if N.provenance and C_check.provenance and N.provenance != C_check.provenance:
        raise UsageError("N and C_check come from different solves")
    return Rank2TensorC(np.asarray(N) - np.asarray(C_check), provenance=N.provenance or C_check.provenance)


@dataclass(frozen=True)
class SymmetricFormResult:
    M: Rank2TensorC
    tail: float        # estimated exterior energy beyond the truncation sphere, relative to ||M||


def assemble_M_symmetric(theta_fields, cs: ContrastSet, alpha: float) -> SymmetricFormResult:
    """M from the manifestly symmetric bilinear form in theta_i, theta_r.

    M/alpha^3 = F/(4 nu) + S/4 + [1/mu]|B| delta - (ka2 Pext + s Pint)/4
                - (q/2)(S - ka2 Pext - [1/mu](Q + Q^T)) + (q s / 4) Pint
    with S = int 1/mu~ curl.curl over the truncated domain, Pint / Pext the
    interior / exterior theta.theta integrals, Q_ri = int_B e_r . curl(theta_i),
    s the interior shift, q = s / nu and F the product of
    curl(curl(theta)/mu_r) = s theta + nu (e x xi) over B.  The eddy-current
    problem is the limit q = 1, ka2 = 0, s = nu = i nu_i.
    """
    fields = _check_theta(theta_fields)
    shift, ext_shift, source = problem_coefficients(fields[0])
    if source == 0:
        if cs.mu_r == 1:
            return SymmetricFormResult(M=Rank2TensorC.zeros(), tail=0.0)
        raise ValueError("nu = 0: the symmetric form is singular, use assemble_N for static fields")
    space = fields[0].space
    mesh = space.mesh
    interior = mesh.regions == INTERIOR
    cells = np.flatnonzero(interior)
    X = np.column_stack([f.coefficients for f in fields])
    jump = 1 - 1 / cs.mu_r
    inv_mu = np.where(interior, 1 / cs.mu_r, 1.0)

    def form(matrix):
        out = X.T @ (matrix @ X)
        return 0.5 * (out + out.T)

    S = form(space.stiffness(inv_mu))
    p_int = form(space.mass(interior.astype(float)))
    p_ext = form(space.mass((~interior).astype(float)))
    curls = np.stack([f.curl(cells) for f in fields], axis=2)
    Q = np.einsum("cri,c->ri", curls, mesh.volumes[cells])
    pts = quadrature_points(mesh, cells)
    w = QUAD_WEIGHTS[None, :] * mesh.volumes[cells, None]
    vals = np.stack([shift * f.values_at(cells, QUAD_BARY) + source * np.cross(AXES[f.index - 1], pts)
                     for f in fields], axis=3)
    F = np.einsum("cqki,cqkr,cq->ri", vals, vals, w)
    volume = mesh.volumes[cells].sum()
    q = shift / source
    M = (F / (4 * source) + S / 4 + jump * volume * np.eye(3) - (ext_shift * p_ext + shift * p_int) / 4
         - 0.5 * q * (S - ext_shift * p_ext - jump * (Q + Q.T)) + 0.25 * q * shift * p_int)
    M = 0.5 * (M + M.T)
    # exterior curl energy beyond R for a dipole-like decay |curl theta|^2 ~ r^-6
    outer_cells = _outer_cells(mesh)
    all_curls = np.stack([f.curl(outer_cells) for f in fields], axis=2)
    R = mesh.truncation_radius
    density = np.einsum("cki,cki->", np.abs(all_curls), np.abs(all_curls)) / max(len(outer_cells), 1)
    tail = 4 * math.pi * R**3 / 3 * density / 4
    norm = np.linalg.norm(M)
    return SymmetricFormResult(M=Rank2TensorC(alpha**3 * M, provenance=theta_provenance(fields)),
                               tail=float(tail / norm) if norm > 0 else 0.0)


def _outer_cells(mesh):
    on_outer = np.zeros(mesh.n_vertices, bool)
    on_outer[mesh.outer_faces.ravel()] = True
    return np.flatnonzero(on_outer[mesh.cells].sum(axis=1) >= 3)


# --------------------------------------------------------------- bundle


@dataclass(frozen=True, eq=False)
class TensorBundle:
    A: Rank2TensorC
    B: Rank2TensorC
    C: Rank3TensorC
    C_check: Rank2TensorC
    N: Rank2TensorC
    M: Rank2TensorC
    R_msi_norm: float
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.allclose(np.asarray(self.M), np.asarray(self.N) - np.asarray(self.C_check), rtol=0, atol=0):
            raise ValueError("M must equal N - C_check")
        if not math.isfinite(self.R_msi_norm):
            raise ValueError("R_msi_norm must be finite")

    @classmethod
    def zeros(cls, provenance=None):
        z = Rank2TensorC.zeros()
        return cls(A=z, B=z, C=Rank3TensorC.zeros(), C_check=z, N=z, M=z, R_msi_norm=0.0,
                   provenance=dict(provenance or {}))

    @classmethod
    def from_fields(cls, theta_fields, scalar_fields, cs: ContrastSet, k: float, alpha: float,
                    provenance=None):
        """Assemble every tensor from the three theta and the three scalar solutions."""
        fields = _check_theta(theta_fields)
        A = assemble_A(fields, cs, k, alpha)
        if fields[0].problem == "eddy":
            # eps_r is unbounded in the eddy-current limit; B vanishes identically
            B = assemble_B(scalar_fields, 2.0, alpha) if scalar_fields else Rank2TensorC.zeros()
        else:
            B = assemble_B(scalar_fields, cs.eps_r, alpha) if scalar_fields else Rank2TensorC.zeros()
        C = assemble_C(fields, cs, k, alpha)
        C_check, R = skew_decompose_C(C)
        N = assemble_N(fields, cs.mu_r, alpha)
        M = assemble_M(N, C_check)
        return cls(A=A, B=B, C=C, C_check=C_check, N=N, M=M, R_msi_norm=R.norm(),
                   provenance=dict(provenance or {}))

    # ---- plain-text serialization

    def to_text(self) -> str:
        out = io.StringIO()
        out.write("# mptwave tensor bundle v1\n")
        for key in sorted(self.provenance):
            out.write(f"# {key} = {self.provenance[key]}\n")
        out.write(f"R_msi_norm {self.R_msi_norm:.17g}\n")
        for name in ("A", "B", "C_check", "N", "M"):
            data = np.asarray(getattr(self, name))
            for r in range(3):
                for i in range(3):
                    z = data[r, i]
                    out.write(f"{name} {r + 1} {i + 1} {z.real:.17g} {z.imag:.17g}\n")
        data = np.asarray(self.C)
        for m, s, i in np.ndindex(3, 3, 3):
            z = data[m, s, i]
            out.write(f"C {m + 1} {s + 1} {i + 1} {z.real:.17g} {z.imag:.17g}\n")
        return out.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "TensorBundle":
        prov = {}
        arrays = {name: np.zeros((3, 3), complex) for name in ("A", "B", "C_check", "N", "M")}
        arrays["C"] = np.zeros((3, 3, 3), complex)
        r_norm = None
        for n, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if "=" in line:
                    key, value = line[1:].split("=", 1)
                    prov[key.strip()] = value.strip()
                continue
            parts = line.split()
            if parts[0] == "R_msi_norm" and len(parts) == 2:
                r_norm = float(parts[1])
            elif parts[0] in arrays:
                idx = tuple(int(p) - 1 for p in parts[1:-2])
                if len(idx) != arrays[parts[0]].ndim:
                    raise ValueError(f"line {n}: wrong index count for {parts[0]}")
                arrays[parts[0]][idx] = complex(float(parts[-2]), float(parts[-1]))
            else:
                raise ValueError(f"line {n}: unrecognised entry {parts[0]!r}")
        if r_norm is None:
            raise ValueError("missing R_msi_norm")
        return cls(A=Rank2TensorC(arrays["A"]), B=Rank2TensorC(arrays["B"]), C=Rank3TensorC(arrays["C"]),
                   C_check=Rank2TensorC(arrays["C_check"]), N=Rank2TensorC(arrays["N"]),
                   M=Rank2TensorC(arrays["M"]), R_msi_norm=r_norm, provenance=prov)

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def read(cls, path) -> "TensorBundle":
        with open(path) as fh:
            return cls.from_text(fh.read())
