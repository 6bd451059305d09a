"""Classical-MDS embedding: exactness on Euclidean data, determinism,
conventions, and the float32 file format."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.distance import cdist

from garment_retarget.errors import EmbeddingWarning, FormatError, ValidationError
from garment_retarget.fixtures import grid_mesh, icosphere
from garment_retarget.geodesics import GeodesicMatrix, geodesic_matrix
from garment_retarget.isomap import (
    VertexEmbedding,
    embedding_distances,
    isomap,
    load_embedding,
    save_embedding,
)


def geo_from_points(points):
    """Wrap a Euclidean point cloud's distance matrix as geodesic input."""
    d = cdist(points, points).astype(np.float32)
    return GeodesicMatrix(n=len(points), d=d)


def test_recovers_euclidean_distances_exactly():
    rng = np.random.default_rng(11)
    pts = rng.normal(size=(40, 3))
    emb = isomap(geo_from_points(pts), 3)
    # MDS recovers the configuration up to rigid motion; distances are the
    # invariant to compare.
    got = embedding_distances(emb)
    expect = cdist(pts, pts)
    assert np.max(np.abs(got - expect)) < 1e-5  # limited by float32 input


@pytest.mark.filterwarnings("ignore::garment_retarget.errors.EmbeddingWarning")
def test_extra_dimensions_stay_silent_on_flat_data():
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(25, 3))
    emb = isomap(geo_from_points(pts), 10)
    # columns beyond rank carry (near) nothing
    tail = np.linalg.norm(emb.phi[:, 3:], axis=0)
    head = np.linalg.norm(emb.phi[:, :3], axis=0)
    assert np.all(tail < 1e-2 * head.min())


def test_nonpositive_eigenvalues_warn_and_zero_columns():
    # distances violating the triangle inequality force a decisively
    # negative eigenvalue into the top-d set
    d = np.array(
        [[0.0, 1.0, 10.0], [1.0, 0.0, 1.0], [10.0, 1.0, 0.0]], dtype=np.float32
    )
    geo = GeodesicMatrix(n=3, d=d)
    with pytest.warns(EmbeddingWarning, match="positive"):
        emb = isomap(geo, 3)
    col_norms = np.linalg.norm(emb.phi, axis=0)
    assert np.count_nonzero(col_norms > 1e-12) < 3


def test_deterministic_bitwise(humanoid_a, geo_a):
    a = isomap(geo_a, 16)
    b = isomap(geo_a, 16)
    assert a.phi.tobytes() == b.phi.tobytes()
    assert a.template_hash == humanoid_a.topology_hash()


def test_columns_ordered_by_energy_and_sign_fixed(geo_a):
    emb = isomap(geo_a, 12)
    norms = np.linalg.norm(emb.phi, axis=0)
    assert np.all(np.diff(norms) <= 1e-9)  # descending eigenvalue scale
    for k in range(emb.d):
        col = emb.phi[:, k]
        assert col[np.argmax(np.abs(col))] >= 0


def test_centered_columns(geo_a):
    emb = isomap(geo_a, 8)
    scale = np.abs(emb.phi).max()
    assert np.all(np.abs(emb.phi.mean(axis=0)) < 1e-9 * scale)


def test_d_bounds():
    geo = geo_from_points(np.random.default_rng(0).normal(size=(10, 3)))
    with pytest.raises(ValidationError):
        isomap(geo, 0)
    with pytest.raises(ValidationError):
        isomap(geo, 11)


def test_dense_fallback_agrees_with_arpack():
    rng = np.random.default_rng(5)
    pts = rng.normal(size=(12, 3))
    geo = geo_from_points(pts)
    small = isomap(geo, 3)  # ARPACK path (3 < n-1)
    with pytest.warns(EmbeddingWarning):
        full = isomap(geo, 11)  # dense path (d >= n-1)
    assert np.allclose(
        embedding_distances(small), embedding_distances(full), atol=1e-6
    )


@settings(max_examples=15)
@given(seed=st.integers(min_value=0, max_value=2**31 - 1))
def test_rigid_motion_invariance(seed):
    """Rotating/translating the source points leaves embedding distances
    unchanged (the distance matrix is the only input)."""
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(20, 3))
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    moved = pts @ q.T + rng.normal(size=3)
    d_a = embedding_distances(isomap(geo_from_points(pts), 3))
    d_b = embedding_distances(isomap(geo_from_points(moved), 3))
    # float32 quantization of the input distances bounds the agreement
    assert np.max(np.abs(d_a - d_b)) < 1e-5


def test_embedding_distances_matches_cdist(geo_a):
    emb = isomap(geo_a, 6)
    # the Gram-based form loses ~sqrt(eps)*scale to cancellation on the
    # nearest pairs; 1e-7 covers it at unit scale
    assert np.allclose(embedding_distances(emb), cdist(emb.phi, emb.phi), atol=1e-7)


def test_file_roundtrip_float32_quantized(tmp_path, geo_a):
    emb = isomap(geo_a, 16)
    path = tmp_path / "emb.bin"
    save_embedding(emb, path)
    back = load_embedding(path)
    assert (back.n, back.d) == (emb.n, emb.d)
    assert back.template_hash == emb.template_hash
    assert np.allclose(back.phi, emb.phi, atol=1e-4)
    # quantize-once: saving the loaded embedding reproduces the same bytes
    again = tmp_path / "emb2.bin"
    save_embedding(back, again)
    assert path.read_bytes() == again.read_bytes()


def test_file_rejects_bad_magic_and_truncation(tmp_path):
    emb = isomap(geo_from_points(np.random.default_rng(1).normal(size=(8, 3))), 3)
    emb = VertexEmbedding(emb.n, emb.d, emb.phi, template_hash=bytes(32))
    path = tmp_path / "emb.bin"
    save_embedding(emb, path)
    raw = path.read_bytes()

    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"WRONGMAG" + raw[8:])
    with pytest.raises(FormatError, match="magic"):
        load_embedding(bad)

    trunc = tmp_path / "trunc.bin"
    trunc.write_bytes(raw[:-1])
    with pytest.raises(FormatError, match="truncated"):
        load_embedding(trunc)


def test_embedding_validates_shape_and_finiteness():
    with pytest.raises(ValidationError):
        VertexEmbedding(n=4, d=2, phi=np.zeros((4, 3)))
    bad = np.zeros((4, 2))
    bad[0, 0] = np.inf
    with pytest.raises(ValidationError):
        VertexEmbedding(n=4, d=2, phi=bad)


def test_more_dimensions_reconstruct_gram_better():
    """The double-centered Gram matrix is approximated strictly better as
    dimensions are added (Eckart-Young on the positive spectral part)."""
    mesh = icosphere(2)
    geo = geodesic_matrix(mesh)
    dist = geo.d.astype(np.float64)
    d2 = dist * dist
    rm = d2.mean(axis=1)
    b = -0.5 * (d2 - rm[:, None] - rm[None, :] + rm.mean())
    residuals = []
    for d in (2, 8, 32):
        emb = isomap(geo, d)
        residuals.append(np.linalg.norm(b - emb.phi @ emb.phi.T))
    assert residuals[0] > residuals[1] > residuals[2]


def test_flat_grid_embeds_in_plane():
    mesh = grid_mesh(6, 6, 0.25)
    geo = geodesic_matrix(mesh)
    emb = isomap(geo, 8)
    # graph geodesics on a flat grid are not Euclidean (taxicab-like), so
    # energy spreads beyond two columns; the planar pair still dominates
    energy = np.linalg.norm(emb.phi, axis=0) ** 2
    assert energy[:2].sum() / energy.sum() > 0.8
    assert energy[:2].min() > energy[2:].max()
