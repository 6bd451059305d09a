"""Sanity of the bundled geometric fixtures and the on-disk fixture set."""

import numpy as np

from garment_retarget.fixtures import (
    SHIRT_RADIUS,
    SHIRT_Z,
    humanoid_regions,
    icosphere,
    shirt,
    two_triangle_fold,
    write_fixture_files,
)
from garment_retarget.mesh import build_edges, load_mesh, vertex_normals


def test_icosphere_subdivision_counts():
    for sub, nv in ((0, 12), (1, 42), (2, 162)):
        m = icosphere(sub)
        assert m.num_vertices == nv
        assert np.allclose(np.linalg.norm(m.vertices, axis=1), 1.0, atol=1e-12)


def test_fold_is_unit_area_consistent():
    m = two_triangle_fold(140.0)
    e = build_edges(m)
    assert len(e.interior_edges) == 1
    assert len(e.boundary_edges) == 4


def test_humanoid_watertight_and_sized(humanoid_a, humanoid_b):
    for mesh in (humanoid_a, humanoid_b):
        e = build_edges(mesh)
        assert len(e.boundary_edges) == 0
        assert len(e.nonmanifold_edges) == 0
        _, valid = vertex_normals(mesh)
        assert valid.all()
    # same template topology across poses, different geometry
    assert humanoid_a.topology_hash() == humanoid_b.topology_hash()
    assert not np.array_equal(humanoid_a.vertices, humanoid_b.vertices)
    height = humanoid_a.vertices[:, 2].max() - humanoid_a.vertices[:, 2].min()
    assert 1.4 < height < 2.0  # meters


def test_shirt_is_open_tube_around_torso(shirt_a):
    e = build_edges(shirt_a)
    assert len(e.boundary_edges) > 0  # hems
    assert len(e.nonmanifold_edges) == 0
    r = np.linalg.norm(shirt_a.vertices[:, :2], axis=1)
    assert np.all(np.abs(r - SHIRT_RADIUS) < 0.05)
    assert shirt_a.vertices[:, 2].min() >= SHIRT_Z[0] - 1e-9
    assert shirt_a.vertices[:, 2].max() <= SHIRT_Z[1] + 1e-9
    assert shirt_a.num_vertices == shirt().num_vertices


def test_humanoid_regions_nonempty_and_in_range(humanoid_a):
    regions = humanoid_regions(humanoid_a)
    assert set(regions) == {"elbows", "armpits", "waist", "knees"}
    for idx in regions.values():
        assert len(idx) > 0
        assert idx.min() >= 0 and idx.max() < humanoid_a.num_vertices


def test_write_fixture_files_idempotent(tmp_path):
    first = write_fixture_files(tmp_path)
    stamps = {name: p.stat().st_mtime_ns for name, p in first.items()}
    second = write_fixture_files(tmp_path)
    assert first == second
    assert stamps == {name: p.stat().st_mtime_ns for name, p in second.items()}
    mesh = load_mesh(first["humanoid_a"])
    assert mesh.num_vertices > 500


def test_repo_fixture_files_match_generators(fixture_paths, humanoid_a, shirt_a):
    from garment_retarget.fixtures import humanoid

    assert np.array_equal(humanoid("a").vertices, humanoid_a.vertices)
    assert np.array_equal(shirt().vertices, shirt_a.vertices)
