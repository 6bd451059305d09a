"""Per-vertex Isomap features via classical MDS on the geodesic matrix.

The embedding of the canonical template transfers to any registered
instance by vertex index, so it is computed once per template and cached.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .errors import EmbeddingWarning, FormatError, NumericError, ValidationError
from .geodesics import GeodesicMatrix

EMB_MAGIC = b"ISOEMB01"

# ARPACK start vector; fixed so repeated runs are bit-identical. Must not be
# constant: the double-centered matrix annihilates the all-ones direction.
_EIGSH_SEED = 20240615


@dataclass(frozen=True)
class VertexEmbedding:
    """n x d float64 feature matrix, one row per template vertex.

    Columns are ordered by descending eigenvalue and sign-fixed so the
    largest-magnitude entry of each column is non-negative. template_hash
    ties the embedding to one template topology.
    """

    n: int
    d: int
    phi: np.ndarray
    template_hash: bytes = b""

    def __post_init__(self):
        if self.n <= 0 or self.d <= 0:
            raise ValidationError(f"embedding dims must be positive, got n={self.n} d={self.d}")
        phi = np.array(self.phi, dtype=np.float64, order="C")
        if phi.shape != (self.n, self.d):
            raise ValidationError(f"phi must be ({self.n}, {self.d}), got {phi.shape}")
        if not np.isfinite(phi).all():
            raise ValidationError("embedding contains non-finite values")
        phi.flags.writeable = False
        object.__setattr__(self, "phi", phi)


def isomap(geo: GeodesicMatrix, d: int) -> VertexEmbedding:
    """Classical MDS of the squared-distance matrix.

    B = -1/2 * J (D o D) J with J = I - (1/n) 11^T; the embedding columns are
    the top-d eigenvectors of B scaled by sqrt(eigenvalue). Non-positive
    eigenvalues are dropped (their columns are zero) with a warning, the
    standard treatment for non-Euclidean D.
    """
    n = geo.n
    if d <= 0:
        raise ValidationError(f"embedding dimension must be positive, got {d}")
    if d > n:
        raise ValidationError(f"embedding dimension {d} exceeds vertex count {n}")

    dist = geo.d.astype(np.float64)
    d2 = dist * dist
    row_mean = d2.mean(axis=1)
    grand_mean = row_mean.mean()
    b = -0.5 * (d2 - row_mean[:, None] - row_mean[None, :] + grand_mean)

    if d >= n - 1:
        # ARPACK needs k < n-1; tiny problems fall back to a dense solve.
        vals, vecs = np.linalg.eigh(b)
        vals, vecs = vals[::-1][:d], vecs[:, ::-1][:, :d]
    else:
        rng = np.random.default_rng(_EIGSH_SEED)
        v0 = rng.standard_normal(n)
        try:
            vals, vecs = eigsh(b, k=d, which="LA", v0=v0, tol=1e-10, maxiter=10 * d * n)
        except ArpackNoConvergence as exc:
            raise NumericError(
                f"eigensolver did not converge: {len(exc.eigenvalues)}/{d} "
                f"eigenpairs after maxiter={10 * d * n}"
            ) from exc
        order = np.argsort(vals)[::-1]
        vals, vecs = vals[order], vecs[:, order]

    pos = vals > 0.0
    if pos.sum() < d:
        warnings.warn(
            f"only {int(pos.sum())} of {d} requested eigenvalues are positive; "
            "remaining embedding columns are zero",
            EmbeddingWarning,
            stacklevel=2,
        )
    phi = np.zeros((n, d), dtype=np.float64)
    phi[:, pos] = vecs[:, pos] * np.sqrt(vals[pos])

    # Sign convention: largest-magnitude entry of each column non-negative
    # (first occurrence on ties), making the embedding reproducible.
    for k in range(d):
        col = phi[:, k]
        if col.any() and col[np.argmax(np.abs(col))] < 0:
            phi[:, k] = -col

    return VertexEmbedding(n=n, d=d, phi=phi, template_hash=geo.source_hash)


def embedding_distances(emb: VertexEmbedding) -> np.ndarray:
    """Pairwise L2 distances between embedding rows (n x n, float64)."""
    sq = np.einsum("ij,ij->i", emb.phi, emb.phi)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (emb.phi @ emb.phi.T)
    np.maximum(d2, 0.0, out=d2)
    return np.sqrt(d2)


def save_embedding(emb: VertexEmbedding, path) -> None:
    """Binary cache: magic, u32 n, u32 d (LE), 32-byte template hash, then
    n*d float32 LE row-major."""
    h = emb.template_hash or bytes(32)
    if len(h) != 32:
        raise ValidationError(f"template hash must be 32 bytes, got {len(h)}")
    with open(path, "wb") as fh:
        fh.write(EMB_MAGIC)
        fh.write(struct.pack("<II", emb.n, emb.d))
        fh.write(h)
        fh.write(emb.phi.astype("<f4").tobytes())


def load_embedding(path) -> VertexEmbedding:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != EMB_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {EMB_MAGIC!r}")
        header = fh.read(8)
        if len(header) != 8:
            raise FormatError(f"{path}: truncated header")
        n, d = struct.unpack("<II", header)
        h = fh.read(32)
        if len(h) != 32:
            raise FormatError(f"{path}: truncated template hash")
        data = fh.read(4 * n * d)
        if len(data) != 4 * n * d:
            raise FormatError(f"{path}: truncated (expected {4 * n * d} data bytes)")
        phi = np.frombuffer(data, dtype="<f4").reshape(n, d).astype(np.float64)
    return VertexEmbedding(n=n, d=d, phi=phi, template_hash=h)
