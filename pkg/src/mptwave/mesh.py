"""Unit shapes and tetrahedral meshes of the object plus a truncated exterior ball.

Meshes are built from nested shells.  The object surface is triangulated from
a cube-face lattice (projected onto the sphere/ellipsoid, kept flat for the
cube), interior shells are scaled copies of it, and exterior shells morph the
surface into the truncation sphere.  Each layer of triangular prisms is split
into three tetrahedra with a rule that only depends on vertex order, which
keeps the mesh conforming without any search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

# local edges of a tetrahedron whose vertices are stored in ascending order
LOCAL_EDGES = np.array([(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])

INTERIOR, EXTERIOR = 1, 0

MIN_DIHEDRAL_DEG = 10.0
MIN_INTERIOR_CELLS = 100

# curved shapes: core box scale and rounding (see _kuhn_grid)
CORE_SCALE = 0.6
CORE_INFLATE = 0.5


class MeshError(ValueError):
    pass


class MeshQualityError(MeshError):
    pass


@dataclass(frozen=True)
class UnitShape:
    """The unit-sized object B, centred at the origin."""

    kind: str
    semi_axes: tuple = (1.0, 1.0, 1.0)
    side: float = 0.0

    def __post_init__(self):
        if self.kind not in ("sphere", "ellipsoid", "cube"):
            raise ValueError(f"unknown shape {self.kind!r}")
        if self.kind == "ellipsoid":
            axes = tuple(float(a) for a in self.semi_axes)
            if len(axes) != 3 or min(axes) <= 0:
                raise ValueError("ellipsoid needs three positive semi-axes")
            if abs(max(axes) - 1.0) > 1e-12:
                raise ValueError("largest ellipsoid semi-axis must be 1")
            object.__setattr__(self, "semi_axes", axes)
        if self.kind == "cube" and not self.side > 0:
            raise ValueError("cube side must be positive")

    @classmethod
    def sphere(cls):
        return cls("sphere")

    @classmethod
    def ellipsoid(cls, a, b, c):
        return cls("ellipsoid", semi_axes=(a, b, c))

    @classmethod
    def cube(cls, side=1.0):
        return cls("cube", side=float(side))

    @property
    def volume(self) -> float:
        if self.kind == "sphere":
            return 4 * math.pi / 3
        if self.kind == "ellipsoid":
            a, b, c = self.semi_axes
            return 4 * math.pi / 3 * a * b * c
        return self.side**3

    @property
    def bounding_radius(self) -> float:
        if self.kind == "cube":
            return self.side * math.sqrt(3) / 2
        return 1.0

    def level(self, points) -> np.ndarray:
        """Negative inside, positive outside, zero on the boundary.

        Exact signed distance for the sphere and cube; for the ellipsoid the
        normalised implicit function (|x/a| - 1) is used, which has the same sign.
        """
        p = np.atleast_2d(points)
        if self.kind == "sphere":
            return np.linalg.norm(p, axis=1) - 1.0
        if self.kind == "ellipsoid":
            return np.linalg.norm(p / np.array(self.semi_axes), axis=1) - 1.0
        q = np.abs(p) - self.side / 2
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(q.max(axis=1), 0.0)
        return outside + inside

    def surface_map(self, cube_points: np.ndarray) -> np.ndarray:
        """Map points of the cube surface [-1, 1]^3 onto the shape boundary."""
        if self.kind == "cube":
            return cube_points * (self.side / 2)
        w = np.tan(np.pi / 4 * cube_points)
        d = w / np.linalg.norm(w, axis=1)[:, None]
        if self.kind == "ellipsoid":
            d = d * np.array(self.semi_axes)
        return d

    def lattice_counts(self, resolution: float) -> tuple:
        """Lattice cells along x, y, z giving surface edges of about `resolution`."""
        if self.kind == "cube":
            spans = (self.side,) * 3
        else:
            spans = tuple(math.pi / 2 * a for a in self.semi_axes)
        return tuple(max(2, math.ceil(sp / resolution - 1e-9)) for sp in spans)


@dataclass(frozen=True)
class BoundaryLayer:
    """Graded layers next to the object surface.

    `first` is the thickness of the layer touching the surface (unit-object
    coordinates), `growth` the ratio between consecutive layers.  With
    `both_sides` the exterior is graded as well.
    """

    first: float
    growth: float = 1.3
    both_sides: bool = False

    def __post_init__(self):
        if not self.first > 0:
            raise ValueError("boundary layer thickness must be positive")
        if not self.growth >= 1.0:
            raise ValueError("boundary layer growth must be >= 1")


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray        # (nv, 3)
    cells: np.ndarray           # (nc, 4), each row ascending
    regions: np.ndarray         # (nc,), INTERIOR or EXTERIOR
    interface_faces: np.ndarray  # (nf, 3), ordered so the normal points out of B
    outer_faces: np.ndarray     # (no, 3), ordered so the normal points outward

    def __post_init__(self):
        if len(self.cells) == 0 or len(self.vertices) == 0:
            raise MeshError("empty mesh")
        cells = np.sort(np.asarray(self.cells, dtype=np.int64), axis=1)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "vertices", np.asarray(self.vertices, dtype=float))
        object.__setattr__(self, "regions", np.asarray(self.regions, dtype=np.int8))
        object.__setattr__(self, "interface_faces", np.asarray(self.interface_faces, dtype=np.int64).reshape(-1, 3))
        object.__setattr__(self, "outer_faces", np.asarray(self.outer_faces, dtype=np.int64).reshape(-1, 3))
        for arr in (self.vertices, self.cells, self.regions, self.interface_faces, self.outer_faces):
            arr.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @cached_property
    def _edge_data(self):
        pairs = self.cells[:, LOCAL_EDGES]  # (nc, 6, 2), first < second
        keys = pairs[..., 0] * self.n_vertices + pairs[..., 1]
        uniq, inverse = np.unique(keys.ravel(), return_inverse=True)
        edges = np.stack([uniq // self.n_vertices, uniq % self.n_vertices], axis=1)
        return edges, inverse.reshape(-1, 6)

    @property
    def edges(self) -> np.ndarray:
        """Global edges, oriented from the lower to the higher vertex index."""
        return self._edge_data[0]

    @property
    def cell_edges(self) -> np.ndarray:
        """(nc, 6) global edge index of each local edge."""
        return self._edge_data[1]

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def jacobians(self) -> np.ndarray:
        v = self.vertices[self.cells]
        return np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0], v[:, 3] - v[:, 0]], axis=1)

    @cached_property
    def volumes(self) -> np.ndarray:
        return np.abs(np.linalg.det(self.jacobians)) / 6

    @cached_property
    def barycentric_gradients(self) -> np.ndarray:
        """(nc, 4, 3) gradients of the four barycentric coordinates."""
        inv = np.linalg.inv(self.jacobians)  # rows of J are edge vectors; columns of inv give gradients
        g123 = np.transpose(inv, (0, 2, 1))
        g0 = -g123.sum(axis=1, keepdims=True)
        return np.concatenate([g0, g123], axis=1)

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.cells].mean(axis=1)

    @property
    def interior(self) -> np.ndarray:
        return self.regions == INTERIOR

    @property
    def truncation_radius(self) -> float:
        idx = np.unique(self.outer_faces)
        return float(np.linalg.norm(self.vertices[idx], axis=1).max())

    def face_area_vectors(self, faces: np.ndarray) -> np.ndarray:
        """Area-weighted normals (half cross products) of the given faces."""
        p = self.vertices[faces]
        return 0.5 * np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])

    def interior_volume(self) -> float:
        return float(self.volumes[self.interior].sum())


def _box_surface(counts):
    """Boundary lattice points of {0..nx}x{0..ny}x{0..nz} and outward-ordered quads.

    Quad corners run (i, j), (i+1, j), (i+1, j+1), (i, j+1) in face coordinates,
    so corner 0 is the lattice-minimum and corner 2 the lattice-maximum.  Splitting
    every quad along 0-2 matches the face diagonals of the structured core.
    """
    counts = tuple(int(c) for c in counts)
    index = {}
    points = []

    def vid(p):
        key = tuple(p)
        if key not in index:
            index[key] = len(points)
            points.append(key)
        return index[key]

    quads = []
    for axis in range(3):
        u_ax, v_ax = [a for a in range(3) if a != axis]
        for side in (0, counts[axis]):
            for i in range(counts[u_ax]):
                for j in range(counts[v_ax]):
                    corners = []
                    for di, dj in ((0, 0), (1, 0), (1, 1), (0, 1)):
                        p = [0, 0, 0]
                        p[axis] = side
                        p[u_ax] = i + di
                        p[v_ax] = j + dj
                        corners.append(vid(p))
                    quads.append(corners)
    return np.array(points, dtype=np.int64), np.array(quads, dtype=np.int64)


def surface_triangulation(shape: UnitShape, counts):
    """Closed, outward-oriented triangulation of the shape boundary.

    Returns (boundary points, triangles, integer lattice coordinates).
    """
    lattice, quads = _box_surface(counts)
    cube_pts = lattice * (2.0 / np.array(counts, float)) - 1.0
    pts = shape.surface_map(cube_pts)
    tris = np.concatenate([quads[:, [0, 1, 2]], quads[:, [0, 2, 3]]])
    p = pts[tris]
    normal = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    flip = np.einsum("ij,ij->i", normal, p.mean(axis=1)) < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return pts, tris, lattice


_KUHN_PATHS = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]


def _kuhn_grid(counts, half_widths, inflate: float = 0.0, equiangular: bool = False):
    """Structured grid of a box, each cell split into six tetrahedra sharing
    its main diagonal (consistent face diagonals, so the grid is conforming).

    With `equiangular` each box coordinate is first remapped by tan(pi u / 4),
    the same map used on curved surfaces, so that core and surface vertices
    of one lattice point lie on a common ray.  With `inflate` > 0 the box is
    then rounded towards an ellipsoid by u -> u ((1 - inflate) + inflate |u|_inf / |u|_2).
    Returns (vertices, cells, vertex id function of integer lattice coordinates).
    """
    nx, ny, nz = counts
    axes = [np.arange(c + 1) for c in counts]
    ii, jj, kk = np.meshgrid(*axes, indexing="ij")
    ijk = np.stack([ii.ravel(), jj.ravel(), kk.ravel()], axis=1)
    u = ijk * (2.0 / np.array(counts, float)) - 1.0
    if equiangular:
        u = np.tan(np.pi / 4 * u)
    if inflate > 0:
        n2 = np.linalg.norm(u, axis=1)
        ninf = np.abs(u).max(axis=1)
        scale = np.ones(len(u))
        nz_ = n2 > 0
        scale[nz_] = (1 - inflate) + inflate * ninf[nz_] / n2[nz_]
        u = u * scale[:, None]
    verts = u * np.asarray(half_widths, float)

    def vid(idx):
        idx = np.asarray(idx)
        return (idx[..., 0] * (ny + 1) + idx[..., 1]) * (nz + 1) + idx[..., 2]

    base = np.stack(np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij"), -1).reshape(-1, 3)
    eye = np.eye(3, dtype=np.int64)
    cells = []
    for path in _KUHN_PATHS:
        c1 = base + eye[path[0]]
        c2 = c1 + eye[path[1]]
        cells.append(np.column_stack([vid(base), vid(c1), vid(c2), vid(base + 1)]))
    return verts, np.concatenate(cells), vid


def _interior_distances(length: np.ndarray, h: float, layer: BoundaryLayer | None) -> list:
    """Per-vertex distances from the surface (increasing) of the interior shells.

    `length` is the path length from each surface vertex to the core box; the
    last entry equals it.  Boundary-layer shells use absolute distances so the
    layer thickness is the same everywhere on the surface.
    """
    shells = []
    depth = 0.0
    short = float(length.min())
    if layer is not None:
        step = layer.first
        while step < h and depth + step < 0.5 * short:
            depth += step
            shells.append(np.full(len(length), depth))
            step *= layer.growth
    remaining = length - depth
    m = max(1, round(float(remaining.mean()) / h))
    for f in np.arange(1, m + 1) / m:
        shells.append(depth + f * remaining)
    return shells


def _exterior_levels(dt: float, radius: float, stretch: float, layer: BoundaryLayer | None) -> list:
    """Shell parameters from 1 (exclusive) up to the truncation radius."""
    levels = []
    t = 1.0
    if layer is not None and layer.both_sides:
        step = layer.first
        while step < dt * t and t + step < radius:
            t += step
            levels.append(t)
            step *= layer.growth
    ratio = 1.0 + dt * stretch
    m = max(1, math.ceil(math.log(radius / t) / math.log(ratio)))
    levels.extend((t * (radius / t) ** (np.arange(1, m + 1) / m)).tolist())
    return levels


def generate_mesh(shape: UnitShape, truncation_radius: float = 5.0, resolution: float = 0.2,
                  boundary_layer: BoundaryLayer | None = None, exterior_stretch: float = 1.0,
                  seed: int = 0, check_quality: bool = True, match_volume: bool = True) -> Mesh:
    """Mesh B and the ball of radius `truncation_radius` around it.

    `resolution` is the target edge length on the object surface.  With
    `match_volume` the facets of curved shapes are pushed out radially so the
    meshed object has the exact volume of the smooth one (an inscribed
    polyhedron otherwise loses O(h^2) volume).  The construction is
    deterministic; `seed` is accepted for interface compatibility and does
    not change the result.
    """
    del seed
    if not truncation_radius >= 3:
        raise ValueError("truncation_radius must be at least 3")
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    if truncation_radius <= shape.bounding_radius:
        raise ValueError("truncation sphere must enclose the object")

    counts = shape.lattice_counts(resolution)
    surf, tris, lattice = surface_triangulation(shape, counts)
    if match_volume and shape.kind != "cube":
        # star-shaped about the origin: the polyhedron is a union of cones
        p = surf[tris]
        poly = abs(np.einsum("ij,ij->i", p[:, 0], np.cross(p[:, 1], p[:, 2]))).sum() / 6
        surf = surf * (shape.volume / poly) ** (1 / 3)
    rho = np.linalg.norm(surf, axis=1)
    dirs = surf / rho[:, None]
    dt = resolution / float(rho.mean())


    vertices = []
    cells = []
    regions = []
    level_ids = []
    n_vert = 0

    def add_vertices(pts):
        nonlocal n_vert
        vertices.append(pts)
        ids = np.arange(n_vert, n_vert + len(pts))
        n_vert += len(pts)
        return ids

    # the prism split rule needs each surface triangle sorted by surface index
    tri_sorted = np.sort(tris, axis=1)
    a, b, c = tri_sorted.T
    if shape.kind == "cube":
        if boundary_layer is not None and not boundary_layer.both_sides:
            raise ValueError("cube meshes only support exterior boundary layers")
        half = np.full(3, shape.side / 2)
        core_scale, inflate = 1.0, 0.0
    else:
        half = np.array(shape.semi_axes)
        core_scale, inflate = CORE_SCALE, CORE_INFLATE
    grid_pts, grid_cells, grid_vid = _kuhn_grid(counts, core_scale * half, inflate,
                                                equiangular=shape.kind != "cube")
    add_vertices(grid_pts)
    cells.append(grid_cells)
    regions.append(np.full(len(grid_cells), INTERIOR, np.int8))
    core_ids = grid_vid(lattice)
    level_ids.append(core_ids)
    if shape.kind != "cube":
        path = surf - grid_pts[core_ids]
        length = np.linalg.norm(path, axis=1)
        unit = path / length[:, None]
        dists = _interior_distances(length, resolution, boundary_layer)
        # from the core outwards: skip the last shell (it is the core boundary)
        for d in dists[-2::-1]:
            level_ids.append(add_vertices(surf - d[:, None] * unit))
        level_ids.append(add_vertices(surf))
    i_surface = len(level_ids) - 1

    outer = _exterior_levels(dt, truncation_radius, exterior_stretch, boundary_layer)
    outer[-1] = truncation_radius
    log_r = math.log(truncation_radius)
    for t in outer:
        r = t * rho ** (1.0 - math.log(t) / log_r)
        level_ids.append(add_vertices(r[:, None] * dirs))

    for lvl in range(len(level_ids) - 1):
        lo, hi = level_ids[lvl], level_ids[lvl + 1]
        prism = np.concatenate([
            np.column_stack([lo[a], lo[b], lo[c], hi[c]]),
            np.column_stack([lo[a], lo[b], hi[b], hi[c]]),
            np.column_stack([lo[a], hi[a], hi[b], hi[c]]),
        ])
        cells.append(prism)
        tag = INTERIOR if lvl < i_surface else EXTERIOR
        regions.append(np.full(len(prism), tag, np.int8))

    mesh = Mesh(
        vertices=np.concatenate(vertices),
        cells=np.concatenate(cells),
        regions=np.concatenate(regions),
        interface_faces=level_ids[i_surface][tris],
        outer_faces=level_ids[-1][tris],
    )
    n_int = int(mesh.interior.sum())
    if n_int < MIN_INTERIOR_CELLS:
        raise MeshQualityError(f"resolution {resolution} too coarse: only {n_int} interior cells")
    if check_quality and boundary_layer is None:
        q = mesh_quality(mesh)
        if q.min_dihedral_deg <= MIN_DIHEDRAL_DEG:
            raise MeshQualityError(f"minimum dihedral angle {q.min_dihedral_deg:.2f} deg too small")
    return mesh


@dataclass(frozen=True)
class MeshQuality:
    min_dihedral_deg: float
    max_dihedral_deg: float
    max_aspect_ratio: float
    n_vertices: int
    n_cells: int
    n_interior_cells: int
    n_exterior_cells: int
    n_edges: int
    n_interface_faces: int
    n_outer_faces: int


def dihedral_angles(mesh: Mesh) -> np.ndarray:
    """(nc, 6) interior dihedral angles in degrees."""
    g = mesh.barycentric_gradients  # gradient of lambda_j is an inward normal of face j
    u = g / np.linalg.norm(g, axis=2, keepdims=True)
    pairs = np.array([(i, j) for i in range(4) for j in range(i + 1, 4)])
    cosang = -np.einsum("cpk,cpk->cp", u[:, pairs[:, 0]], u[:, pairs[:, 1]])
    return np.degrees(np.arccos(np.clip(cosang, -1, 1)))


def aspect_ratios(mesh: Mesh) -> np.ndarray:
    """Circumradius over three times the inradius (1 for a regular tetrahedron)."""
    v = mesh.vertices[mesh.cells]
    vol = mesh.volumes
    p = mesh.vertices[mesh.cells]
    faces = [(1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)]
    area = sum(0.5 * np.linalg.norm(np.cross(p[:, j] - p[:, i], p[:, k] - p[:, i]), axis=1) for i, j, k in faces)
    inradius = 3 * vol / area
    # circumcentre solves 2 (v_j - v_0) . x = |v_j|^2 - |v_0|^2
    lhs = 2 * (v[:, 1:] - v[:, :1])
    rhs = (v[:, 1:] ** 2).sum(axis=2) - (v[:, :1] ** 2).sum(axis=2)
    centre = np.linalg.solve(lhs, rhs[..., None])[..., 0]
    circum = np.linalg.norm(centre - v[:, 0], axis=1)
    return circum / (3 * inradius)


def mesh_quality(mesh: Mesh) -> MeshQuality:
    if mesh is None or mesh.n_cells == 0:
        raise MeshError("empty mesh")
    ang = dihedral_angles(mesh)
    n_int = int(mesh.interior.sum())
    return MeshQuality(
        min_dihedral_deg=float(ang.min()),
        max_dihedral_deg=float(ang.max()),
        max_aspect_ratio=float(aspect_ratios(mesh).max()),
        n_vertices=mesh.n_vertices,
        n_cells=mesh.n_cells,
        n_interior_cells=n_int,
        n_exterior_cells=mesh.n_cells - n_int,
        n_edges=mesh.n_edges,
        n_interface_faces=len(mesh.interface_faces),
        n_outer_faces=len(mesh.outer_faces),
    )


def write_mesh(mesh: Mesh, path) -> None:
    """Write the plain-text `mesh v1` format (coordinates at 17 significant digits)."""
    with open(path, "w") as fh:
        fh.write("mesh v1\n")
        fh.write(f"vertices {mesh.n_vertices}\n")
        for x, y, z in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g} {z:.17g}\n")
        fh.write(f"cells {mesh.n_cells}\n")
        for (a, b, c, d), tag in zip(mesh.cells, mesh.regions):
            fh.write(f"{a} {b} {c} {d} {tag}\n")
        for name, faces in (("interface_faces", mesh.interface_faces), ("outer_faces", mesh.outer_faces)):
            fh.write(f"{name} {len(faces)}\n")
            for a, b, c in faces:
                fh.write(f"{a} {b} {c}\n")


def read_mesh(path) -> Mesh:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "mesh v1":
        raise MeshError("not a 'mesh v1' file")
    pos = 1

    def block(name, width, dtype):
        nonlocal pos
        head = lines[pos].split()
        if len(head) != 2 or head[0] != name:
            raise MeshError(f"expected '{name} <count>' at line {pos + 1}")
        count = int(head[1])
        rows = lines[pos + 1: pos + 1 + count]
        pos += 1 + count
        if len(rows) != count:
            raise MeshError(f"truncated {name} block")
        data = np.array([r.split() for r in rows], dtype=dtype).reshape(count, width)
        return data

    verts = block("vertices", 3, float)
    cells = block("cells", 5, np.int64)
    iface = block("interface_faces", 3, np.int64)
    oface = block("outer_faces", 3, np.int64)
    return Mesh(vertices=verts, cells=cells[:, :4], regions=cells[:, 4],
                interface_faces=iface, outer_faces=oface)
