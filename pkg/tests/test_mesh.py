import math

import numpy as np
import pytest

from mptwave.mesh import (MIN_DIHEDRAL_DEG, BoundaryLayer, MeshError, UnitShape, generate_mesh, mesh_quality,
                          read_mesh, write_mesh)


@pytest.fixture(scope="module")
def sphere_mesh():
    return generate_mesh(UnitShape.sphere(), 5.0, 0.25)


def faces_of(cells):
    f = np.sort(np.concatenate([cells[:, [1, 2, 3]], cells[:, [0, 2, 3]], cells[:, [0, 1, 3]],
                                cells[:, [0, 1, 2]]]), axis=1)
    return f


def test_sphere_volume(sphere_mesh):
    assert sphere_mesh.interior_volume() == pytest.approx(4 * math.pi / 3, rel=1e-9)
    inscribed = generate_mesh(UnitShape.sphere(), 5.0, 0.25, match_volume=False)
    # without volume matching the inscribed polyhedron loses O(h^2) of the volume
    assert inscribed.interior_volume() == pytest.approx(4 * math.pi / 3, rel=0.03)
    assert inscribed.interior_volume() < 4 * math.pi / 3


def test_whole_ball_volume(sphere_mesh):
    # polyhedral approximation of the truncation sphere
    assert sphere_mesh.volumes.sum() == pytest.approx(4 * math.pi / 3 * 125, rel=0.03)
    assert np.all(sphere_mesh.volumes > 0)


def test_cube_is_exact():
    mesh = generate_mesh(UnitShape.cube(1.0), 4.0, 0.3)
    assert mesh.interior_volume() == pytest.approx(1.0, abs=1e-9)


def test_ellipsoid_volume():
    shape = UnitShape.ellipsoid(1.0, 0.5, 0.5)
    mesh = generate_mesh(shape, 4.0, 0.2)
    assert mesh.interior_volume() == pytest.approx(4 * math.pi / 3 * 0.25, rel=1e-9)
    c = mesh.centroids[mesh.interior]
    assert np.all(shape.level(c) < 1.1)


def test_conformity_and_interface(sphere_mesh):
    m = sphere_mesh
    f = faces_of(m.cells)
    uniq, counts = np.unique(f, axis=0, return_counts=True)
    assert counts.max() == 2
    boundary = {tuple(x) for x in uniq[counts == 1]}
    assert boundary == {tuple(x) for x in np.sort(m.outer_faces, axis=1)}
    # every interface face bounds one interior and one exterior cell
    n = len(m.cells)
    owner = np.tile(np.arange(n), 4)
    iface = {tuple(x) for x in np.sort(m.interface_faces, axis=1)}
    sides = {}
    for face, cell in zip(map(tuple, f), owner):
        if face in iface:
            sides.setdefault(face, []).append(bool(m.interior[cell]))
    assert len(sides) == len(iface)
    assert all(sorted(v) == [False, True] for v in sides.values())
    assert np.allclose(np.linalg.norm(m.vertices[m.outer_faces], axis=2), 5.0, rtol=1e-12)


def test_quality(sphere_mesh):
    q = mesh_quality(sphere_mesh)
    assert q.min_dihedral_deg > MIN_DIHEDRAL_DEG
    assert q.n_interior_cells + q.n_exterior_cells == q.n_cells
    assert q.n_edges == sphere_mesh.n_edges


def test_graded_mesh():
    # boundary-layer cells are flat by design, so only the layer itself is checked
    mesh = generate_mesh(UnitShape.sphere(), 5.0, 0.3, boundary_layer=BoundaryLayer(0.01, 1.3))
    assert mesh.interior_volume() == pytest.approx(4 * math.pi / 3, rel=1e-9)
    radii = np.linalg.norm(mesh.vertices, axis=1)
    surface = radii[np.unique(mesh.interface_faces)]
    inner = radii[(radii < surface.min() - 1e-9) & (radii > surface.min() - 0.05)]
    assert surface.min() - inner.max() == pytest.approx(0.01, rel=0.2)


def test_empty_mesh_is_an_error():
    with pytest.raises(MeshError):
        mesh_quality(None)


def test_refinement_growth():
    coarse = generate_mesh(UnitShape.sphere(), 5.0, 0.4)
    fine = generate_mesh(UnitShape.sphere(), 5.0, 0.2)
    ratio = fine.interior.sum() / coarse.interior.sum()
    assert 6 <= ratio <= 10


@pytest.mark.parametrize("radius,res", [(2.0, 0.2), (5.0, 0.0), (5.0, -1.0)])
def test_bad_settings(radius, res):
    with pytest.raises(ValueError):
        generate_mesh(UnitShape.sphere(), radius, res)


def test_bad_shapes():
    with pytest.raises(ValueError):
        UnitShape.ellipsoid(2.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        UnitShape("torus")


def test_deterministic_and_round_trip(tmp_path):
    a = generate_mesh(UnitShape.sphere(), 4.0, 0.4)
    b = generate_mesh(UnitShape.sphere(), 4.0, 0.4, seed=7)
    assert np.array_equal(a.vertices, b.vertices) and np.array_equal(a.cells, b.cells)
    write_mesh(a, tmp_path / "m.txt")
    c = read_mesh(tmp_path / "m.txt")
    assert np.array_equal(a.vertices, c.vertices) and np.array_equal(a.cells, c.cells)
    assert np.array_equal(a.regions, c.regions)
    (tmp_path / "bad.txt").write_text("nope\n")
    with pytest.raises(MeshError):
        read_mesh(tmp_path / "bad.txt")
