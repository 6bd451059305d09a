"""K-nearest-neighbor search against a brute-force oracle, including the
tie rule and the snap-weight behavior."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from garment_retarget.errors import ValidationError
from garment_retarget.knn import (
    SNAP_DISTANCE,
    indexed_distances,
    inverse_distance_weights,
    knn_search,
)


def brute_force_knn(points, queries, k):
    """Oracle: full distance matrix + stable argsort (ties to the smaller
    point index)."""
    d = np.sqrt(((queries[:, None, :] - points[None, :, :]) ** 2).sum(axis=2))
    idx = np.argsort(d, axis=1, kind="stable")[:, :k]
    rows = np.arange(len(queries))[:, None]
    return idx, d[rows, idx]


@pytest.mark.parametrize("dim", [1, 2, 3, 8, 9, 40, 130])
def test_matches_brute_force_across_dims(dim):
    rng = np.random.default_rng(dim)
    points = rng.normal(size=(150, dim))
    queries = rng.normal(size=(37, dim))
    idx, dist = knn_search(points, queries, 5)
    oidx, odist = brute_force_knn(points, queries, 5)
    assert np.array_equal(idx, oidx)
    assert np.allclose(dist, odist, atol=1e-9)


def test_duplicated_points_tie_to_smaller_index():
    points = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 0.0], [2.0, 0.0]])
    queries = np.array([[0.0, 0.0]])
    idx, dist = knn_search(points, queries, 3)
    assert idx.tolist() == [[1, 2, 0]]
    assert np.allclose(dist, [[0.0, 0.0, 1.0]])


def test_query_on_grid_with_exact_ties():
    # unit square corners, query at the center: all four tie
    points = np.array([[0.0, 0], [1.0, 0], [0, 1.0], [1.0, 1.0]])
    queries = np.array([[0.5, 0.5]])
    idx, _ = knn_search(points, queries, 4)
    assert idx.tolist() == [[0, 1, 2, 3]]


def test_k_bounds_and_empty():
    points = np.zeros((4, 3))
    with pytest.raises(ValidationError):
        knn_search(points, points, 5)
    with pytest.raises(ValidationError):
        knn_search(points, points, 0)
    idx, dist = knn_search(points + np.arange(4)[:, None], np.zeros((0, 3)), 2)
    assert idx.shape == (0, 2) and dist.shape == (0, 2)


@settings(max_examples=40)
@given(
    n=st.integers(min_value=1, max_value=60),
    q=st.integers(min_value=1, max_value=20),
    dim=st.integers(min_value=1, max_value=20),
    dup=st.booleans(),
    seed=st.integers(min_value=0, max_value=2**31 - 1),
)
def test_accelerated_equals_brute_force(n, q, dim, dup, seed):
    rng = np.random.default_rng(seed)
    points = rng.normal(size=(n, dim))
    if dup and n >= 2:
        points[n // 2] = points[0]  # force an exact tie
    queries = rng.normal(size=(q, dim))
    if dup:
        queries[0] = points[0]  # force a snap-range hit
    k = min(n, 4)
    idx, dist = knn_search(points, queries, k)
    oidx, odist = brute_force_knn(points, queries, k)
    assert np.array_equal(idx, oidx)
    assert np.allclose(dist, odist, atol=1e-9)


def test_indexed_distances_gathers():
    rng = np.random.default_rng(2)
    points = rng.normal(size=(30, 4))
    queries = rng.normal(size=(9, 4))
    idx, dist = knn_search(points, queries, 6)
    assert np.allclose(indexed_distances(points, queries, idx), dist, atol=1e-12)


def test_weights_rows_sum_to_one():
    rng = np.random.default_rng(8)
    dist = np.abs(rng.normal(size=(50, 7))) + 1e-3
    w = inverse_distance_weights(dist)
    assert np.all(w >= 0)
    assert np.allclose(w.sum(axis=1), 1.0, atol=1e-12)


def test_weights_snap_to_one_hot():
    # rows come from knn_search, sorted ascending; snap keys on column 0
    dist = np.array([[SNAP_DISTANCE / 10, 0.5, 1.0], [0.0, 0.0, 1.0]])
    w = inverse_distance_weights(dist)
    assert np.array_equal(w[0], [1.0, 0.0, 0.0])
    assert np.array_equal(w[1], [1.0, 0.0, 0.0])


def test_weights_equal_distances_uniform():
    w = inverse_distance_weights(np.full((3, 4), 0.7))
    assert np.allclose(w, 0.25, atol=1e-12)


def test_weights_inverse_proportionality():
    w = inverse_distance_weights(np.array([[1.0, 2.0, 4.0]]))
    assert np.allclose(w[0] / w[0, 0], [1.0, 0.5, 0.25])
