"""Exact k-nearest-neighbor queries with deterministic tie-breaking.

Two accelerated paths sit behind one interface: a KD-tree for low
dimensions and a blocked BLAS distance scan for high-dimensional feature
spaces, where KD-trees degenerate. Both paths finish identically: exact
distances are recomputed for the candidate set, candidates are ordered by
(distance, index), and boundary ties fall back to a full scan of the row.
Selection therefore matches a brute-force scan exactly.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .errors import ValidationError

# Points within this distance of a query are treated as coincident: the
# inverse-distance weights snap to that single nearest point.
SNAP_DISTANCE = 1e-9

_TREE_MAX_DIM = 8


def indexed_distances(points: np.ndarray, queries: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Distance from each query row to the points named by the matching row
    of `idx`; the same kernel knn_search uses, so callers that re-evaluate
    distances over a fixed neighbor set agree with it bitwise."""
    diff = queries[:, None, :] - points[idx]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def _full_row(points: np.ndarray, q: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    diff = points - q
    dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    order = np.lexsort((np.arange(len(points)), dist))[:k]
    return order, dist[order]


def knn_search(points: np.ndarray, queries: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """k nearest `points` for each query row.

    Returns (indices, distances), both (m, k), rows sorted by distance with
    ties broken by smaller point index.
    """
    points = np.asarray(points, dtype=np.float64)
    queries = np.asarray(queries, dtype=np.float64)
    n, dim = points.shape
    if k <= 0:
        raise ValidationError(f"k must be positive, got {k}")
    if k > n:
        raise ValidationError(f"k={k} exceeds point count {n}")

    ncand = min(2 * k, n)
    if dim <= _TREE_MAX_DIM:
        tree = cKDTree(points)
        _, cand = tree.query(queries, k=ncand)
        cand = cand.reshape(len(queries), ncand)
    else:
        cand = _blas_candidates(points, queries, ncand)

    dist = indexed_distances(points, queries, cand)
    # order candidates by (distance, index)
    m = len(queries)
    order = np.lexsort((cand, dist), axis=1)
    rows = np.arange(m)[:, None]
    cand = cand[rows, order]
    dist = dist[rows, order]

    idx_out = cand[:, :k].copy()
    dist_out = dist[:, :k].copy()

    if ncand > k:
        # A tie between the k-th kept and the first dropped candidate means
        # the candidate window may have hidden an equally-near smaller index.
        unsafe = np.flatnonzero(dist[:, k - 1] >= dist[:, ncand - 1])
        for i in unsafe:
            idx_out[i], dist_out[i] = _full_row(points, queries[i], k)
    elif ncand == n and k < n:
        pass  # candidate set is the whole point set; ordering above is final
    return idx_out, dist_out


def _blas_candidates(points: np.ndarray, queries: np.ndarray, ncand: int, block: int = 512) -> np.ndarray:
    """Candidate preselection by squared distance via one GEMM per block."""
    psq = np.einsum("ij,ij->i", points, points)
    out = np.empty((len(queries), ncand), dtype=np.int64)
    for s in range(0, len(queries), block):
        q = queries[s:s + block]
        d2 = np.einsum("ij,ij->i", q, q)[:, None] - 2.0 * (q @ points.T) + psq[None, :]
        if ncand < len(points):
            part = np.argpartition(d2, ncand - 1, axis=1)[:, :ncand]
        else:
            part = np.broadcast_to(np.arange(len(points)), (len(q), len(points))).copy()
        out[s:s + len(q)] = part
    return out


def inverse_distance_weights(distances: np.ndarray, snap: float = SNAP_DISTANCE) -> np.ndarray:
    """Normalized 1/d weights per row; rows whose nearest distance is below
    `snap` get a one-hot weight on that first (nearest, smallest-index)
    column."""
    distances = np.asarray(distances, dtype=np.float64)
    snapped = distances[:, 0] < snap
    safe = np.where(distances < snap, np.inf, distances)
    inv = 1.0 / safe
    w = np.zeros_like(distances)
    reg = ~snapped
    w[reg] = inv[reg] / inv[reg].sum(axis=1, keepdims=True)
    w[snapped, 0] = 1.0
    return w
