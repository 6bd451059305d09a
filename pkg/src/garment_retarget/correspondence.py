"""Dense garment-to-body correspondence through template embeddings.

A surface (garment or target body) is tied to the canonical template by a
registered template instance: the template posed to fit the surface, same
vertex count and order as the template the embedding was computed on.
Template features extrapolate to the surface by inverse-distance weighting
over the k Euclidean-nearest instance vertices; correspondences are then
the inverse-distance-weighted average of the k feature-nearest target
vertices.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ValidationError
from .isomap import VertexEmbedding
from .knn import SNAP_DISTANCE, inverse_distance_weights, knn_search
from .mesh import MIN_EDGE_LENGTH, TriMesh, _edge_lengths_per_face

CORR_MAGIC = b"CORR01\x00\x00"

DEFAULT_K = 32


@dataclass(frozen=True)
class RegisteredPair:
    """A surface mesh plus the template instance registered to it.

    The instance must have exactly the template topology the embedding was
    built on; features transfer from template to instance by vertex index.
    """

    surface: TriMesh
    template_instance: TriMesh
    template_embedding: VertexEmbedding

    def __post_init__(self):
        n = self.template_instance.num_vertices
        if n != self.template_embedding.n:
            raise ValidationError(
                f"template instance has {n} vertices but embedding covers "
                f"{self.template_embedding.n}"
            )
        h = self.template_embedding.template_hash
        if h and h != self.template_instance.topology_hash():
            raise ValidationError(
                "embedding template hash does not match the registered "
                "template instance topology"
            )


@dataclass(frozen=True)
class CorrespondenceMap:
    """Per-garment-vertex target point with the neighbor set behind it.

    points: (n, 3) correspondence targets.
    neighbors: (n, k) target vertex ids, ordered by feature distance.
    weights: (n, k) non-negative, each row sums to 1 (one-hot when snapped).
    """

    points: np.ndarray
    neighbors: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if not (len(self.points) == len(self.neighbors) == len(self.weights)):
            raise ValidationError("correspondence arrays disagree on vertex count")

    @property
    def k(self) -> int:
        return self.neighbors.shape[1]


def extrapolate_embedding(pair: RegisteredPair, k: int = DEFAULT_K) -> VertexEmbedding:
    """Transfer template features onto the surface vertices.

    Each surface vertex takes the inverse-distance-weighted average of the
    embedding rows of its k nearest template-instance vertices (Euclidean,
    ties by smaller index). A vertex within the snap distance of an
    instance vertex copies that row exactly.
    """
    n_template = pair.template_instance.num_vertices
    if k > n_template:
        raise ValidationError(f"k={k} exceeds template vertex count {n_template}")
    idx, dist = knn_search(pair.template_instance.vertices, pair.surface.vertices, k)
    w = inverse_distance_weights(dist)
    phi = np.einsum("ij,ijk->ik", w, pair.template_embedding.phi[idx])
    snapped = dist[:, 0] < SNAP_DISTANCE
    if snapped.any():
        phi[snapped] = pair.template_embedding.phi[idx[snapped, 0]]
    return VertexEmbedding(
        n=pair.surface.num_vertices,
        d=pair.template_embedding.d,
        phi=phi,
        template_hash=pair.template_embedding.template_hash,
    )


def nearest_template_distance(pair: RegisteredPair) -> float:
    """Largest distance from a surface vertex to its nearest template-
    instance vertex; a diagnostic for how far the registration is being
    extrapolated (large values mean unreliable features, e.g. very loose
    clothing)."""
    _, dist = knn_search(pair.template_instance.vertices, pair.surface.vertices, 1)
    return float(dist.max()) if len(dist) else 0.0


def correspond(
    garment_emb: VertexEmbedding,
    target_emb: VertexEmbedding,
    target_vertices: np.ndarray,
    k: int = DEFAULT_K,
) -> CorrespondenceMap:
    """Coarse correspondence targets for every garment vertex.

    For garment feature row phi_i, find the k nearest target feature rows
    (L2 in R^d, ties by smaller index) and average the matching target
    vertex positions with inverse-feature-distance weights. A feature
    distance below the snap threshold copies that target vertex exactly.
    """
    if garment_emb.d != target_emb.d:
        raise ValidationError(
            f"embedding dimension mismatch: garment d={garment_emb.d}, "
            f"target d={target_emb.d}"
        )
    target_vertices = np.asarray(target_vertices, dtype=np.float64)
    if len(target_vertices) != target_emb.n:
        raise ValidationError(
            f"target has {len(target_vertices)} vertices but embedding covers {target_emb.n}"
        )
    if k > target_emb.n:
        raise ValidationError(f"k={k} exceeds target vertex count {target_emb.n}")

    idx, dist = knn_search(target_emb.phi, garment_emb.phi, k)
    w = inverse_distance_weights(dist)
    points = np.einsum("ij,ijk->ik", w, target_vertices[idx])
    snapped = dist[:, 0] < SNAP_DISTANCE
    if snapped.any():
        points[snapped] = target_vertices[idx[snapped, 0]]
    return CorrespondenceMap(points=points, neighbors=idx, weights=w)


def coarse_retarget(garment: TriMesh, corr: CorrespondenceMap) -> TriMesh:
    """Replace garment vertices by their correspondence targets, keeping the
    faces. The result may be geometrically degenerate (it is built without
    the zero-edge check); a warning is emitted so downstream refinement can
    decide what to do."""
    if len(corr.points) != garment.num_vertices:
        raise ValidationError(
            f"correspondence covers {len(corr.points)} vertices, garment has "
            f"{garment.num_vertices}"
        )
    out = garment.with_vertices(corr.points, validate=False)
    if garment.num_faces:
        if (_edge_lengths_per_face(out.vertices, out.faces) <= MIN_EDGE_LENGTH).any():
            warnings.warn(
                "coarse retargeting produced zero-length edges; mesh is "
                "degenerate but refinement may still run",
                UserWarning,
                stacklevel=2,
            )
    return out


def save_correspondence(corr: CorrespondenceMap, path) -> None:
    """Sidecar: magic, u32 n, u32 k, then per vertex 3xf32 target point,
    k x u32 neighbor ids, k x f32 weights."""
    n, k = len(corr.points), corr.k
    rec = np.dtype([("x", "<f4", 3), ("nbr", "<u4", k), ("w", "<f4", k)])
    data = np.empty(n, dtype=rec)
    data["x"] = corr.points.astype("<f4")
    data["nbr"] = corr.neighbors.astype("<u4")
    data["w"] = corr.weights.astype("<f4")
    with open(path, "wb") as fh:
        fh.write(CORR_MAGIC)
        fh.write(struct.pack("<II", n, k))
        fh.write(data.tobytes())


def load_correspondence(path) -> CorrespondenceMap:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != CORR_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {CORR_MAGIC!r}")
        header = fh.read(8)
        if len(header) != 8:
            raise FormatError(f"{path}: truncated header")
        n, k = struct.unpack("<II", header)
        rec = np.dtype([("x", "<f4", 3), ("nbr", "<u4", k), ("w", "<f4", k)])
        raw = fh.read(rec.itemsize * n)
        if len(raw) != rec.itemsize * n:
            raise FormatError(f"{path}: truncated record block")
        data = np.frombuffer(raw, dtype=rec)
    return CorrespondenceMap(
        points=data["x"].astype(np.float64),
        neighbors=data["nbr"].astype(np.int64),
        weights=data["w"].astype(np.float64),
    )
