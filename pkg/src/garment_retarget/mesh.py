"""Indexed triangle meshes: construction, topology queries, Wavefront OBJ I/O.

All geometry is stored in 64-bit floats, units are meters. Meshes are
immutable after construction (arrays are marked read-only) and safe to
share across threads.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, MeshWarning, ValidationError

MIN_EDGE_LENGTH = 1e-12


@dataclass(frozen=True)
class TriMesh:
    """Indexed triangle mesh: (n, 3) float64 vertices, (m, 3) int32 faces.

    Faces use 0-based indices. `validate=True` additionally rejects
    zero-length edges; structural checks (index range, degenerate faces)
    always run. Pass `validate=False` only for meshes produced by vertex
    substitution, which may legitimately be degenerate.
    """

    vertices: np.ndarray
    faces: np.ndarray
    validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64, order="C")
        f = np.array(self.faces, dtype=np.int32, order="C")
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValidationError(f"vertices must be (n, 3), got {v.shape}")
        if f.size == 0:
            f = f.reshape(0, 3)
        if f.ndim != 2 or f.shape[1] != 3:
            raise ValidationError(f"faces must be (m, 3), got {f.shape}")
        if not np.isfinite(v).all():
            raise ValidationError("vertices contain non-finite values")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            bad = int(np.argwhere((f < 0) | (f >= len(v)))[0, 0])
            raise ValidationError(
                f"face {bad} references vertex outside [0, {len(v)})"
            )
        same = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
        if same.any():
            raise ValidationError(
                f"degenerate faces (repeated vertex index): {np.flatnonzero(same).tolist()}"
            )
        if self.validate and f.size:
            lengths = _edge_lengths_per_face(v, f)
            if (lengths <= MIN_EDGE_LENGTH).any():
                fi = int(np.argwhere(lengths <= MIN_EDGE_LENGTH)[0, 0])
                raise ValidationError(
                    f"zero-length edge (<= {MIN_EDGE_LENGTH} m) in face {fi}"
                )
        v.flags.writeable = False
        f.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    def with_vertices(self, vertices: np.ndarray, validate: bool = True) -> "TriMesh":
        """Same topology, new vertex positions."""
        return TriMesh(np.asarray(vertices, dtype=np.float64), self.faces, validate=validate)

    def topology_hash(self) -> bytes:
        """SHA-256 over vertex count and face indices (geometry excluded).

        Registered template instances share topology with the canonical
        template, so this hash is what binds an embedding to a template
        across poses.
        """
        h = hashlib.sha256()
        h.update(b"TRIMESH-TOPO-v1")
        h.update(np.uint64(self.num_vertices).tobytes())
        h.update(np.uint64(self.num_faces).tobytes())
        h.update(self.faces.astype("<u4").tobytes())
        return h.digest()


def _edge_lengths_per_face(v: np.ndarray, f: np.ndarray) -> np.ndarray:
    p = v[f]
    e = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1)
    return np.min(np.linalg.norm(e, axis=2), axis=1)


@dataclass(frozen=True)
class EdgeSet:
    """Undirected edges of a mesh plus interior-edge face adjacency.

    edges: (E, 2) int32, smaller index first, lexicographically sorted.
    lengths: (E,) float64 rest lengths taken from the mesh that built this.
    interior_edges: indices into `edges` with exactly two incident faces.
    interior_faces: (len(interior_edges), 2) incident face indices.
    boundary_edges: indices with exactly one incident face.
    nonmanifold_edges: indices with three or more incident faces; these are
    excluded from the interior adjacency.
    """

    edges: np.ndarray
    lengths: np.ndarray
    interior_edges: np.ndarray
    interior_faces: np.ndarray
    boundary_edges: np.ndarray
    nonmanifold_edges: np.ndarray

    def __post_init__(self):
        for name in ("edges", "lengths", "interior_edges", "interior_faces",
                     "boundary_edges", "nonmanifold_edges"):
            arr = getattr(self, name)
            arr.flags.writeable = False

    @property
    def num_edges(self) -> int:
        return len(self.edges)


def build_edges(mesh: TriMesh) -> EdgeSet:
    """Collect unique undirected edges and classify them by face count.

    Deterministic: identical input arrays yield identical edge ordering
    (lexicographic in the sorted vertex pair).
    """
    f = mesh.faces
    if len(f) == 0:
        empty_i = np.zeros(0, dtype=np.int64)
        return EdgeSet(
            edges=np.zeros((0, 2), dtype=np.int32),
            lengths=np.zeros(0, dtype=np.float64),
            interior_edges=empty_i,
            interior_faces=np.zeros((0, 2), dtype=np.int32),
            boundary_edges=empty_i.copy(),
            nonmanifold_edges=empty_i.copy(),
        )
    halfedges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]], axis=0)
    halfedges = np.sort(halfedges, axis=1)
    face_of_halfedge = np.concatenate([np.arange(len(f), dtype=np.int32)] * 3)
    edges, inverse, counts = np.unique(
        halfedges, axis=0, return_inverse=True, return_counts=True
    )
    inverse = inverse.reshape(-1)

    lengths = np.linalg.norm(
        mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]], axis=1
    )

    # Incident faces per edge, ordered by face index for determinism.
    order = np.lexsort((face_of_halfedge, inverse))
    sorted_edges = inverse[order]
    sorted_faces = face_of_halfedge[order]
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])

    interior = np.flatnonzero(counts == 2)
    boundary = np.flatnonzero(counts == 1)
    nonmanifold = np.flatnonzero(counts >= 3)
    if len(nonmanifold):
        warnings.warn(
            f"{len(nonmanifold)} non-manifold edges (>2 incident faces); "
            "excluded from bend-loss adjacency",
            MeshWarning,
            stacklevel=2,
        )
    assert np.array_equal(sorted_edges[starts], np.arange(len(edges)))
    interior_faces = np.stack(
        [sorted_faces[starts[interior]], sorted_faces[starts[interior] + 1]], axis=1
    ).astype(np.int32)

    return EdgeSet(
        edges=edges.astype(np.int32),
        lengths=lengths,
        interior_edges=interior,
        interior_faces=interior_faces,
        boundary_edges=boundary,
        nonmanifold_edges=nonmanifold,
    )


def vertex_normals(mesh: TriMesh) -> tuple[np.ndarray, np.ndarray]:
    """Area-weighted vertex normals.

    Returns (normals, valid) where normals is (n, 3) with unit rows wherever
    valid is True. Vertices whose accumulated normal has (near-)zero length,
    e.g. isolated vertices, get a zero vector and valid=False; no error is
    raised.
    """
    v, f = mesh.vertices, mesh.faces
    acc = np.zeros_like(v)
    if len(f):
        # cross product length = 2 * face area, so summing raw crosses is the
        # area weighting
        p = v[f]
        cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        for c in range(3):
            np.add.at(acc, f[:, c], cross)
    norms = np.linalg.norm(acc, axis=1)
    valid = norms > 1e-20
    out = np.zeros_like(acc)
    out[valid] = acc[valid] / norms[valid, None]
    return out, valid


def load_mesh(path) -> TriMesh:
    """Load an ASCII Wavefront OBJ triangle mesh.

    Quads are fan-triangulated as (v0,v1,v2), (v0,v2,v3); polygons with more
    than four vertices are rejected. `vn`/`vt` records and any other line
    types are ignored. Indices are 1-based per the OBJ convention; zero or
    negative indices are a format error.
    """
    vertices: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise FormatError(f"{path}:{lineno}: vertex needs 3 coordinates")
                try:
                    vertices.append((float(parts[1]), float(parts[2]), float(parts[3])))
                except ValueError as exc:
                    raise FormatError(f"{path}:{lineno}: bad vertex coordinate: {exc}") from exc
            elif tag == "f":
                idx = []
                for tok in parts[1:]:
                    head = tok.split("/")[0]
                    try:
                        i = int(head)
                    except ValueError as exc:
                        raise FormatError(f"{path}:{lineno}: bad face index {head!r}") from exc
                    if i <= 0:
                        raise FormatError(
                            f"{path}:{lineno}: face index {i} (OBJ indices are 1-based)"
                        )
                    idx.append(i - 1)
                if len(idx) == 3:
                    faces.append(tuple(idx))
                elif len(idx) == 4:
                    faces.append((idx[0], idx[1], idx[2]))
                    faces.append((idx[0], idx[2], idx[3]))
                elif len(idx) < 3:
                    raise FormatError(f"{path}:{lineno}: face needs at least 3 indices")
                else:
                    raise FormatError(
                        f"{path}:{lineno}: {len(idx)}-gon faces are not supported"
                    )
            # vn, vt, and anything else: ignored
    verts = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    face_arr = np.asarray(faces, dtype=np.int32).reshape(-1, 3)
    if face_arr.size and face_arr.max() >= len(verts):
        raise FormatError(f"{path}: face index {int(face_arr.max()) + 1} exceeds vertex count")
    return TriMesh(verts, face_arr)


def save_mesh(mesh: TriMesh, path) -> None:
    """Write an ASCII OBJ. Floats use shortest round-trip formatting, so
    load(save(m)) reproduces coordinates exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        for x, y, z in mesh.vertices.tolist():
            fh.write(f"v {x!r} {y!r} {z!r}\n")
        for a, b, c in mesh.faces.tolist():
            fh.write(f"f {a + 1} {b + 1} {c + 1}\n")
