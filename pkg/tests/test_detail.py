"""Laplacian detail transfer: operators, anchored solve, anchor policies."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from garment_retarget.detail import (
    DEFAULT_ANCHOR_WEIGHT,
    build_system,
    detail_integrate,
    laplacian_coords,
    load_anchors,
    pick_anchors,
    solve_system,
    uniform_laplacian,
)
from garment_retarget.errors import FormatError, ValidationError
from garment_retarget.fixtures import grid_mesh, icosphere, tube
from garment_retarget.mesh import TriMesh, build_edges


def dense_lstsq_oracle(source, retargeted, anchors, weight):
    """Dense least squares on the stacked system [L; w E] V = [delta; w P]."""
    lap = uniform_laplacian(source).toarray()
    delta = lap @ source.vertices
    n = source.num_vertices
    rows = np.zeros((len(anchors), n))
    rows[np.arange(len(anchors)), anchors] = weight
    a = np.vstack([lap, rows])
    b = np.vstack([delta, weight * retargeted.vertices[anchors]])
    solution, *_ = np.linalg.lstsq(a, b, rcond=None)
    return solution


def test_uniform_laplacian_normalized_rows():
    mesh = icosphere(1)
    lap = uniform_laplacian(mesh)
    assert np.allclose(np.asarray(lap.sum(axis=1)).ravel(), 0.0, atol=1e-12)
    assert np.allclose(lap.diagonal(), 1.0)  # L = I - D^-1 A
    edges = build_edges(mesh)
    deg = np.zeros(mesh.num_vertices)
    np.add.at(deg, edges.edges[:, 0], 1.0)
    np.add.at(deg, edges.edges[:, 1], 1.0)
    dense = lap.toarray()
    i, j = edges.edges[0]
    assert abs(dense[i, j] + 1.0 / deg[i]) < 1e-12


def test_laplacian_coords_match_operator():
    mesh = grid_mesh(4, 3, 0.3, height=lambda x, y: 0.1 * np.sin(3 * x) * np.cos(2 * y))
    lap = uniform_laplacian(mesh)
    assert np.allclose(laplacian_coords(mesh), lap @ mesh.vertices, atol=1e-12)


def test_identity_recovery():
    mesh = icosphere(2)
    anchors = pick_anchors(mesh, 0.05)
    out, residual = detail_integrate(mesh, mesh, anchors)
    assert np.max(np.abs(out.vertices - mesh.vertices)) < 1e-6
    assert residual < 1e-8
    assert np.array_equal(out.faces, mesh.faces)


def test_matches_dense_lstsq_oracle():
    rng = np.random.default_rng(12)
    source = grid_mesh(
        6, 5, 0.2, height=lambda x, y: 0.05 * np.sin(8 * x) * np.sin(6 * y)
    )
    lifted = source.vertices + np.array([0.3, -0.1, 0.4])
    lifted = lifted + rng.normal(0, 0.01, lifted.shape)
    retargeted = source.with_vertices(lifted, validate=False)
    anchors = pick_anchors(source, 0.1)
    for weight in (0.1, 1.0, 10.0):
        got, _ = detail_integrate(source, retargeted, anchors, anchor_weight=weight)
        expect = dense_lstsq_oracle(source, retargeted, anchors, weight)
        assert np.max(np.abs(got.vertices - expect)) < 1e-8


def test_bump_transfers_onto_translated_shape():
    flat = grid_mesh(8, 8, 0.25)

    def bump(x, y):
        return 0.12 * np.exp(-(((x - 1.0) ** 2 + (y - 1.0) ** 2) / 0.18))

    source = grid_mesh(8, 8, 0.25, height=bump)
    target_plane = flat.with_vertices(flat.vertices + np.array([0.0, 0.0, 0.5]))
    anchors = pick_anchors(source, 0.05)  # grid boundary
    out, _ = detail_integrate(source, target_plane, anchors, anchor_weight=1.0)
    # interior relief relative to the moved plane reproduces the bump
    relief = out.vertices[:, 2] - 0.5
    assert np.max(np.abs(relief - source.vertices[:, 2])) < 5e-3
    assert relief.max() > 0.1


def test_single_anchor_translation_exact():
    mesh = icosphere(1)
    shift = np.array([0.4, -0.2, 0.7])
    moved = mesh.with_vertices(mesh.vertices + shift)
    out, residual = detail_integrate(mesh, moved, np.array([5]))
    # Laplacian coords are translation-invariant, one anchor fixes the
    # nullspace: the solve reproduces the translation exactly
    assert np.max(np.abs(out.vertices - moved.vertices)) < 1e-8
    assert residual < 1e-10


@settings(max_examples=15)
@given(
    anchor=st.integers(min_value=0, max_value=41),
    tx=st.floats(min_value=-2.0, max_value=2.0),
    tz=st.floats(min_value=-2.0, max_value=2.0),
)
def test_single_anchor_translation_property(anchor, tx, tz):
    mesh = icosphere(1)  # 42 vertices
    shift = np.array([tx, 0.3, tz])
    moved = mesh.with_vertices(mesh.vertices + shift)
    out, _ = detail_integrate(mesh, moved, np.array([anchor]))
    assert np.max(np.abs(out.vertices - moved.vertices)) < 1e-7


def test_anchor_order_and_duplicates_ignored():
    rng = np.random.default_rng(5)
    source = icosphere(1)
    retargeted = source.with_vertices(source.vertices * 1.4)
    anchors = pick_anchors(source, 0.2)
    shuffled = rng.permutation(np.concatenate([anchors, anchors[:3]]))
    a, _ = detail_integrate(source, retargeted, anchors)
    b, _ = detail_integrate(source, retargeted, shuffled)
    assert np.max(np.abs(a.vertices - b.vertices)) < 1e-9


def test_weight_tradeoff_direction():
    source = icosphere(1)
    squashed = source.vertices * np.array([1.0, 1.0, 0.5])
    retargeted = source.with_vertices(squashed, validate=False)
    anchors = pick_anchors(source, 0.1)
    soft, _ = detail_integrate(source, retargeted, anchors, anchor_weight=0.1)
    hard, _ = detail_integrate(source, retargeted, anchors, anchor_weight=50.0)
    soft_err = np.abs(soft.vertices[anchors] - squashed[anchors]).max()
    hard_err = np.abs(hard.vertices[anchors] - squashed[anchors]).max()
    assert hard_err < soft_err  # heavier anchors track the retarget closer
    assert DEFAULT_ANCHOR_WEIGHT == 0.1


def test_pick_anchors_includes_boundary_sorted():
    mesh = tube(10, 5, 0.5, 0.0, 1.0)
    edges = build_edges(mesh)
    boundary = np.unique(edges.edges[edges.boundary_edges].ravel())
    anchors = pick_anchors(mesh, 0.05)
    assert np.all(np.diff(anchors) > 0)
    assert set(boundary).issubset(set(anchors.tolist()))


def test_pick_anchors_closed_mesh_fps_from_zero():
    mesh = icosphere(1)
    anchors = pick_anchors(mesh, 0.1)
    assert 0 in anchors.tolist()
    assert len(anchors) == int(np.ceil(0.1 * mesh.num_vertices))
    again = pick_anchors(mesh, 0.1)
    assert np.array_equal(anchors, again)


def test_pick_anchors_fraction_bounds():
    mesh = icosphere(1)
    with pytest.raises(ValidationError):
        pick_anchors(mesh, 0.0)
    with pytest.raises(ValidationError):
        pick_anchors(mesh, 1.5)


def test_load_anchors_parses_and_dedupes(tmp_path):
    path = tmp_path / "anchors.txt"
    path.write_text("# anchors\n3\n1\n\n3  # repeated\n7\n")
    assert load_anchors(path).tolist() == [1, 3, 7]


@pytest.mark.parametrize(
    "body, message",
    [("x\n", "vertex index"), ("-2\n", "negative"), ("# only comments\n", "no anchor")],
)
def test_load_anchors_rejects_malformed(tmp_path, body, message):
    path = tmp_path / "anchors.txt"
    path.write_text(body)
    with pytest.raises(FormatError, match=message):
        load_anchors(path)


def test_build_system_validations():
    source = icosphere(1)
    retargeted = source.with_vertices(source.vertices * 2.0)
    with pytest.raises(ValidationError, match="topology"):
        build_system(source, icosphere(2), np.array([0]))
    with pytest.raises(ValidationError, match="empty"):
        build_system(source, retargeted, np.array([], dtype=np.int64))
    with pytest.raises(ValidationError, match="in \\[0"):
        build_system(source, retargeted, np.array([10 ** 6]))
    with pytest.raises(ValidationError, match="weight"):
        build_system(source, retargeted, np.array([0]), anchor_weight=0.0)


def test_unanchored_component_rejected():
    a = icosphere(1)
    v = np.vstack([a.vertices, a.vertices + 5.0])
    f = np.vstack([a.faces, a.faces + a.num_vertices])
    two = TriMesh(v, f)
    with pytest.raises(ValidationError, match="no anchor"):
        build_system(two, two, np.array([0]))  # second sphere uncovered
    system = build_system(two, two, np.array([0, a.num_vertices]))
    solution, residual = solve_system(system)
    assert np.isfinite(solution).all()
    assert residual < 1e-8


def test_residual_meets_bound():
    source = icosphere(2)
    retargeted = source.with_vertices(source.vertices * 1.5 + [0.2, 0.0, -0.1])
    system = build_system(source, retargeted, pick_anchors(source, 0.05))
    _, residual = solve_system(system)
    assert residual <= 1e-8 * max(np.linalg.norm(system.delta), 1.0)
