"""All-pairs geodesic distances on a template mesh.

Distances are graph geodesics: shortest paths over the edge graph with
Euclidean edge weights. This is a deliberately simple, deterministic
strategy; exact polyhedral geodesics or the heat method could be swapped in
behind the same interface.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

from .errors import FormatError, ValidationError
from .mesh import EdgeSet, TriMesh, build_edges

GEOD_MAGIC = b"GEOD01\x00\x00"


@dataclass(frozen=True)
class GeodesicMatrix:
    """Symmetric all-pairs distance matrix, float32 storage.

    Distances are computed in float64 and quantized to float32 once, so a
    matrix read back from the binary cache is bit-identical to a freshly
    computed one. `source_hash` is the topology hash of the mesh the matrix
    was built from (empty when unknown).
    """

    n: int
    d: np.ndarray
    source_hash: bytes = b""

    def __post_init__(self):
        if self.d.shape != (self.n, self.n) or self.d.dtype != np.float32:
            raise ValidationError(
                f"distance matrix must be float32 ({self.n}, {self.n}), "
                f"got {self.d.dtype} {self.d.shape}"
            )
        d = np.array(self.d, order="C")
        d.flags.writeable = False
        object.__setattr__(self, "d", d)


def edge_graph(mesh: TriMesh, edges: EdgeSet | None = None) -> csr_matrix:
    """Sparse symmetric adjacency with Euclidean edge lengths as weights."""
    if edges is None:
        edges = build_edges(mesh)
    n = mesh.num_vertices
    i, j = edges.edges[:, 0], edges.edges[:, 1]
    w = edges.lengths
    return csr_matrix(
        (np.concatenate([w, w]), (np.concatenate([i, j]), np.concatenate([j, i]))),
        shape=(n, n),
    )


def single_source(mesh: TriMesh, edges: EdgeSet, src: int) -> np.ndarray:
    """Dijkstra distances from one vertex, float64. Unreachable vertices get
    +inf; the caller decides whether that is an error."""
    if not 0 <= src < mesh.num_vertices:
        raise ValidationError(f"source vertex {src} out of range [0, {mesh.num_vertices})")
    graph = edge_graph(mesh, edges)
    return dijkstra(graph, directed=False, indices=src)


def geodesic_matrix(mesh: TriMesh, edges: EdgeSet | None = None) -> GeodesicMatrix:
    """All-pairs graph geodesics.

    Raises for disconnected meshes, naming the component sizes. The result
    is symmetrized with an elementwise minimum before float32 quantization,
    so ``d == d.T`` holds bit-exactly.
    """
    if edges is None:
        edges = build_edges(mesh)
    graph = edge_graph(mesh, edges)
    ncomp, labels = connected_components(graph, directed=False)
    if ncomp > 1:
        sizes = np.bincount(labels).tolist()
        raise ValidationError(
            f"mesh is disconnected: {ncomp} components with sizes {sizes}"
        )
    dist = dijkstra(graph, directed=False)
    dist = np.minimum(dist, dist.T)
    d32 = dist.astype(np.float32)
    return GeodesicMatrix(n=mesh.num_vertices, d=d32, source_hash=mesh.topology_hash())


def save_geodesics(geo: GeodesicMatrix, path) -> None:
    """Binary cache: magic, u32 n (LE), then n*n float32 LE row-major."""
    with open(path, "wb") as fh:
        fh.write(GEOD_MAGIC)
        fh.write(struct.pack("<I", geo.n))
        fh.write(geo.d.astype("<f4").tobytes())


def load_geodesics(path, source_hash: bytes = b"") -> GeodesicMatrix:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != GEOD_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {GEOD_MAGIC!r}")
        (n,) = struct.unpack("<I", fh.read(4))
        data = fh.read(4 * n * n)
        if len(data) != 4 * n * n:
            raise FormatError(f"{path}: truncated (expected {4 * n * n} data bytes)")
        d = np.frombuffer(data, dtype="<f4").reshape(n, n).astype(np.float32)
    return GeodesicMatrix(n=n, d=d, source_hash=source_hash)
