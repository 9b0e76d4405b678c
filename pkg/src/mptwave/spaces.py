"""Finite element spaces on tetrahedral meshes: curl-conforming edge spaces and P1.

Every edge basis function is a combination of the products la grad(lb) of
barycentric coordinates, stored as a coefficient tensor C[p, a, b].  Mass,
curl and trace integrals then follow from the exact moments
int la lb = vol (1 + delta_ab) / 20 on tetrahedra and area (1 + delta_ab) / 12
on triangles.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .mesh import LOCAL_EDGES, Mesh

# symmetric 4-point rule, exact for quadratics on tetrahedra
_QA, _QB = 0.5854101966249685, 0.1381966011250105
QUAD_BARY = np.full((4, 4), _QB) + np.eye(4) * (_QA - _QB)
QUAD_WEIGHTS = np.full(4, 0.25)

EDGE_FAMILIES = ("whitney", "complete")

FACE_EDGES = np.array([(0, 1), (0, 2), (1, 2)])

_CHUNK = 20000


def _coefficients(pairs: np.ndarray, n_vertices: int, complete: bool) -> np.ndarray:
    """C[p, a, b] for the edge functions on a simplex with the given local edges."""
    nb = len(pairs)
    c = np.zeros((2 * nb if complete else nb, n_vertices, n_vertices))
    for k, (a, b) in enumerate(pairs):
        c[k, a, b], c[k, b, a] = 1.0, -1.0            # la grad lb - lb grad la
        if complete:
            c[nb + k, a, b], c[nb + k, b, a] = 1.0, 1.0  # grad(la lb)
    return c


def _mass_moments(coef, grads, measure, moment):
    """int phi_p . phi_q on simplices; grads (n, d, 3), measure (n,), moment = int la lb / measure."""
    out = np.empty((len(grads), len(coef), len(coef)))
    for s in range(0, len(grads), _CHUNK):
        g = grads[s:s + _CHUNK]
        dots = np.einsum("cjk,clk->cjl", g, g)
        e = np.einsum("pij,cjl->cpil", coef, dots)
        out[s:s + _CHUNK] = np.einsum("cpil,ik,qkl->cpq", e, moment, coef)
    return out * measure[:, None, None]


def scatter(local: np.ndarray, dofs: np.ndarray, size: int) -> sp.csr_matrix:
    k = dofs.shape[1]
    rows = np.repeat(dofs, k, axis=1).ravel()
    cols = np.tile(dofs, (1, k)).ravel()
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(size, size))


def quadrature_points(mesh: Mesh, cells) -> np.ndarray:
    """(n, 4, 3) physical points of the 4-point rule."""
    v = mesh.vertices[mesh.cells[cells]]
    return np.einsum("qj,cjk->cqk", QUAD_BARY, v)


def locate_points(mesh: Mesh, points):
    """Cell index and barycentric coordinates of each point (brute force)."""
    inv = np.linalg.inv(mesh.jacobians)
    v0 = mesh.vertices[mesh.cells[:, 0]]
    cells = np.empty(len(points), np.int64)
    bary = np.empty((len(points), 4))
    for n, p in enumerate(points):
        lam = np.einsum("cij,ci->cj", inv, p - v0)
        full = np.column_stack([1 - lam.sum(axis=1), lam])
        c = int(np.argmax(full.min(axis=1)))
        if full[c].min() < -1e-9:
            raise ValueError(f"point {p} lies outside the mesh")
        cells[n], bary[n] = c, full[c]
    return cells, bary


def face_edge_ids(mesh: Mesh, faces: np.ndarray):
    """Sorted face vertices and the global ids of their edges (01, 02, 12)."""
    f = np.sort(faces, axis=1)
    keys_all = mesh.edges[:, 0] * mesh.n_vertices + mesh.edges[:, 1]
    keys = f[:, FACE_EDGES[:, 0]] * mesh.n_vertices + f[:, FACE_EDGES[:, 1]]
    ids = np.searchsorted(keys_all, keys)
    if not np.all(keys_all[np.minimum(ids, len(keys_all) - 1)] == keys):
        raise ValueError("face edges not found in mesh")
    return f, ids


def face_gradients(points: np.ndarray):
    """Surface gradients (nf, 3, 3) of the barycentric coordinates and areas (nf,)."""
    e = np.stack([points[:, 1] - points[:, 0], points[:, 2] - points[:, 0]], axis=1)
    gram = np.einsum("fik,fjk->fij", e, e)
    g12 = np.linalg.solve(gram, e)
    g = np.concatenate([-g12.sum(axis=1, keepdims=True), g12], axis=1)
    area = 0.5 * np.linalg.norm(np.cross(e[:, 0], e[:, 1]), axis=1)
    return g, area


class EdgeSpace:
    """Lowest-order curl-conforming space.

    family "whitney" has the six functions la grad(lb) - lb grad(la) per cell.
    family "complete" adds grad(la lb) for every edge, so that each cell holds
    all linear vector fields (twelve functions).  Degrees of freedom are the
    Whitney ones in global edge order, followed by the gradient ones.
    """

    def __init__(self, mesh: Mesh, family: str = "complete"):
        if family not in EDGE_FAMILIES:
            raise ValueError(f"unknown edge family {family!r}")
        self.mesh, self.family = mesh, family
        self.complete = family == "complete"
        ne = mesh.n_edges
        self.n_edges = ne
        self.n_dofs = 2 * ne if self.complete else ne
        ce = mesh.cell_edges
        self.cell_dofs = np.hstack([ce, ce + ne]) if self.complete else ce
        self.coef = _coefficients(LOCAL_EDGES, 4, self.complete)
        self.face_coef = _coefficients(FACE_EDGES, 3, self.complete)

    def __repr__(self):
        return f"EdgeSpace({self.family}, dofs={self.n_dofs})"

    @property
    def n_local(self) -> int:
        return len(self.coef)

    # ---- pointwise values

    def values(self, cells, bary) -> np.ndarray:
        """Basis values at barycentric points: cells (n,), bary (n, q, 4) or (q, 4) -> (n, q, nb, 3)."""
        g = self.mesh.barycentric_gradients[cells]
        if bary.ndim == 2:
            bary = np.broadcast_to(bary, (len(g),) + bary.shape)
        return np.einsum("pij,cqi,cjk->cqpk", self.coef, bary, g)

    @cached_property
    def curls(self) -> np.ndarray:
        """(nc, nb, 3) constant curls; curl(la grad lb) = grad la x grad lb."""
        g = self.mesh.barycentric_gradients
        cross = np.cross(g[:, :, None, :], g[:, None, :, :])
        return np.einsum("pij,cijk->cpk", self.coef, cross)

    # ---- matrices

    @cached_property
    def mass_local(self) -> np.ndarray:
        mesh = self.mesh
        return _mass_moments(self.coef, mesh.barycentric_gradients, mesh.volumes, (1 + np.eye(4)) / 20)

    def _scatter(self, local, cells=None):
        dofs = self.cell_dofs if cells is None else self.cell_dofs[cells]
        return scatter(local, dofs, self.n_dofs)

    def stiffness(self, coef) -> sp.csr_matrix:
        """int coef curl(u) . curl(v), coef per cell."""
        c = self.curls
        return self._scatter(np.einsum("c,cek,cfk->cef", np.asarray(coef) * self.mesh.volumes, c, c))

    def mass(self, coef) -> sp.csr_matrix:
        """int coef u . v, coef per cell."""
        return self._scatter(np.asarray(coef)[:, None, None] * self.mass_local)

    def face_dofs(self, faces) -> np.ndarray:
        _, ids = face_edge_ids(self.mesh, faces)
        return np.hstack([ids, ids + self.n_edges]) if self.complete else ids

    def boundary_mass(self, faces) -> sp.csr_matrix:
        """int over the faces of the tangential traces u_T . v_T."""
        f, _ = face_edge_ids(self.mesh, faces)
        g, area = face_gradients(self.mesh.vertices[f])
        local = _mass_moments(self.face_coef, g, area, (1 + np.eye(3)) / 12)
        return scatter(local, self.face_dofs(faces), self.n_dofs)

    # ---- right-hand sides

    def load(self, func, cells) -> np.ndarray:
        """int_cells func(x) . v with the 4-point rule; func maps (n, q, 3) points to values."""
        mesh = self.mesh
        vals = func(quadrature_points(mesh, cells))
        w = self.values(cells, QUAD_BARY)
        local = np.einsum("cqk,cqek,q,c->ce", vals, w, QUAD_WEIGHTS, mesh.volumes[cells])
        out = np.zeros(self.n_dofs, complex)
        np.add.at(out, self.cell_dofs[cells], local)
        return out

    def curl_load(self, vector, cells) -> np.ndarray:
        """int_cells vector . curl(v) for a constant vector."""
        local = np.einsum("cek,k,c->ce", self.curls[cells], vector, self.mesh.volumes[cells])
        out = np.zeros(self.n_dofs, complex)
        np.add.at(out, self.cell_dofs[cells], local)
        return out

    # ---- links to nodal spaces

    def gradient(self) -> sp.csr_matrix:
        """P1 vertex values -> coefficients of their gradient."""
        mesh = self.mesh
        ne = self.n_edges
        rows = np.repeat(np.arange(ne), 2)
        g = sp.csr_matrix((np.tile([-1.0, 1.0], ne), (rows, mesh.edges.ravel())), shape=(ne, mesh.n_vertices))
        if self.complete:
            g = sp.vstack([g, sp.csr_matrix((ne, mesh.n_vertices))]).tocsr()
        return g

    def quadratic_gradient(self) -> sp.csr_matrix:
        """Gradients of the P2 space (vertex functions, then edge bubbles la lb)."""
        g = self.gradient()
        if not self.complete:
            return g
        ne = self.n_edges
        bubbles = sp.vstack([sp.csr_matrix((ne, ne)), sp.identity(ne, format="csr")])
        return sp.hstack([g, bubbles]).tocsr()

    def vector_interpolation(self) -> sp.csr_matrix:
        """Exact coefficients of P1 vector fields; columns ordered (vertex, component)."""
        mesh = self.mesh
        edges = mesh.edges
        tangent = mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]]
        ne, nv = len(edges), mesh.n_vertices
        rows = np.repeat(np.arange(ne), 6)
        cols = np.stack([edges[:, 0, None] * 3 + np.arange(3), edges[:, 1, None] * 3 + np.arange(3)], 1).ravel()
        # tangential component along the edge: la (u_a . t) + lb (u_b . t)
        whitney = sp.csr_matrix((np.stack([tangent / 2, tangent / 2], 1).ravel(), (rows, cols)), shape=(ne, 3 * nv))
        if not self.complete:
            return whitney
        grad = sp.csr_matrix((np.stack([tangent / 2, -tangent / 2], 1).ravel(), (rows, cols)), shape=(ne, 3 * nv))
        return sp.vstack([whitney, grad]).tocsr()


# ------------------------------------------------------------------- P1


def node_stiffness(mesh: Mesh, coef) -> sp.csr_matrix:
    g = mesh.barycentric_gradients
    local = np.einsum("c,cik,cjk->cij", np.asarray(coef) * mesh.volumes, g, g)
    return scatter(local, mesh.cells, mesh.n_vertices)


def boundary_node_mass(mesh: Mesh, faces: np.ndarray) -> sp.csr_matrix:
    p = mesh.vertices[faces]
    area = 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)
    local = area[:, None, None] * (1 + np.eye(3)) / 12
    return scatter(local, faces, mesh.n_vertices)
