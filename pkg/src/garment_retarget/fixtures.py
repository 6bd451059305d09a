"""Procedural test geometry.

Analytic primitives (sphere, grid, tube, fold) for unit tests, plus a
low-poly humanoid extracted from a capsule-skeleton signed distance field
and a tube shirt fitted around its torso. The humanoid doubles as its own
canonical template; the posed variant deforms the same vertices, so both
poses are registered instances of one topology. Everything here is
deterministic: fixed constants, no randomness.
"""

from __future__ import annotations

import math

import numpy as np

from .mesh import TriMesh, build_edges

# Skeleton in meters, feet near z=0: capsule/sphere (endpoints, radius).
# Limb lengths differ left/right on purpose: real bodies are asymmetric,
# and distinct extremity-to-extremity distances keep far-field rank
# comparisons from collapsing into ties between mirror-image vertices.
_TORSO = ((0.0, 0.0, 0.95), (0.0, 0.0, 1.45), 0.14)
_HEAD = ((0.012, 0.0, 1.58), (0.012, 0.0, 1.58), 0.11)
_LIMBS = (
    ((0.17, 0.0, 1.38), (0.45, 0.0, 1.05), 0.06),  # right arm
    ((-0.17, 0.0, 1.38), (-0.44, 0.02, 1.09), 0.06),  # left arm, shorter
    ((0.10, 0.0, 0.95), (0.11, 0.0, 0.08), 0.075),  # right leg
    ((-0.10, 0.0, 0.95), (-0.11, 0.015, 0.14), 0.075),  # left leg, shorter
)
# Hands, feet, and face carry an extra fine relief octave (below).
_FINE_CENTERS = (
    (0.45, 0.0, 1.05),
    (-0.44, 0.02, 1.09),
    (0.11, 0.0, 0.08),
    (-0.11, 0.015, 0.14),
    (0.012, 0.0, 1.66),
)
_SMOOTH_K = 0.03

SHIRT_Z = (1.00, 1.28)
SHIRT_RADIUS = 0.19
SHIRT_RIPPLE = 0.002
SHIRT_RIPPLE_FREQ = 6


def tetrahedron() -> TriMesh:
    """Regular tetrahedron with outward-facing triangles."""
    v = np.array(
        [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=np.float64
    ) / math.sqrt(3.0)
    f = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]], dtype=np.int32)
    return TriMesh(v, f)


def cube() -> TriMesh:
    """Unit cube centered at the origin, 12 outward triangles."""
    v = np.array(
        [
            [-0.5, -0.5, -0.5],
            [0.5, -0.5, -0.5],
            [0.5, 0.5, -0.5],
            [-0.5, 0.5, -0.5],
            [-0.5, -0.5, 0.5],
            [0.5, -0.5, 0.5],
            [0.5, 0.5, 0.5],
            [-0.5, 0.5, 0.5],
        ],
        dtype=np.float64,
    )
    f = np.array(
        [
            [0, 2, 1], [0, 3, 2],  # bottom (z-)
            [4, 5, 6], [4, 6, 7],  # top (z+)
            [0, 1, 5], [0, 5, 4],  # y-
            [2, 3, 7], [2, 7, 6],  # y+
            [1, 2, 6], [1, 6, 5],  # x+
            [3, 0, 4], [3, 4, 7],  # x-
        ],
        dtype=np.int32,
    )
    return TriMesh(v, f)


def two_triangle_fold(dihedral_deg: float) -> TriMesh:
    """Two unit-height triangles sharing the edge x=0: dihedral 180 means
    coplanar (bend term 0); dihedral 90 gives face normals at 90 degrees
    (bend term 1)."""
    theta = math.radians(180.0 - dihedral_deg)
    v = np.array(
        [
            [0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [1.0, 0.5, 0.0],
            [-math.cos(theta), 0.5, math.sin(theta)],
        ],
        dtype=np.float64,
    )
    f = np.array([[0, 1, 2], [1, 0, 3]], dtype=np.int32)
    return TriMesh(v, f)


def grid_mesh(nx: int, ny: int, spacing: float = 1.0, height=None) -> TriMesh:
    """(nx+1)x(ny+1) vertex grid in the xy plane, diagonal-split quads,
    normals toward +z. `height(x, y)` optionally displaces z."""
    xs = np.arange(nx + 1, dtype=np.float64) * spacing
    ys = np.arange(ny + 1, dtype=np.float64) * spacing
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    z = height(gx, gy) if height is not None else np.zeros_like(gx)
    v = np.stack([gx.ravel(), gy.ravel(), z.ravel()], axis=1)

    def vid(i, j):
        return i * (ny + 1) + j

    faces = []
    for i in range(nx):
        for j in range(ny):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            faces.append([a, b, c])
            faces.append([a, c, d])
    return TriMesh(v, np.asarray(faces, dtype=np.int32))


def tube(
    n_theta: int,
    n_rings: int,
    radius: float,
    z0: float,
    z1: float,
    ripple: float = 0.0,
    ripple_freq: int = 1,
    center=(0.0, 0.0),
) -> TriMesh:
    """Open cylinder: n_rings rings of n_theta vertices between z0 and z1,
    outward orientation, boundary loops at both ends. An optional angular
    ripple modulates the radius to give the surface transferable detail."""
    if n_theta < 3 or n_rings < 2:
        raise ValueError("tube needs n_theta >= 3 and n_rings >= 2")
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    zs = np.linspace(z0, z1, n_rings)
    r = radius + ripple * np.sin(ripple_freq * theta)
    verts = np.empty((n_rings * n_theta, 3), dtype=np.float64)
    for j, z in enumerate(zs):
        s = slice(j * n_theta, (j + 1) * n_theta)
        verts[s, 0] = center[0] + r * np.cos(theta)
        verts[s, 1] = center[1] + r * np.sin(theta)
        verts[s, 2] = z
    faces = []
    for j in range(n_rings - 1):
        for i in range(n_theta):
            a = j * n_theta + i
            b = j * n_theta + (i + 1) % n_theta
            c = (j + 1) * n_theta + (i + 1) % n_theta
            d = (j + 1) * n_theta + i
            faces.append([a, b, c])
            faces.append([a, c, d])
    return TriMesh(verts, np.asarray(faces, dtype=np.int32))


def icosphere(subdivisions: int = 2, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> TriMesh:
    """Icosahedron subdivided `subdivisions` times, projected to the
    sphere. Deterministic vertex order."""
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    verts = [
        (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
        (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
        (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.asarray(v, dtype=np.float64) for v in verts]
    verts = [v / np.linalg.norm(v) for v in verts]

    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for (a, b, c) in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces

    v = np.asarray(verts) * radius + np.asarray(center, dtype=np.float64)
    return TriMesh(v, np.asarray(faces, dtype=np.int32))


def _capsule_sdf(p: np.ndarray, a, b, r: float) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.linalg.norm(p - a, axis=-1) - r
    t = np.clip(((p - a) @ ab) / denom, 0.0, 1.0)
    closest = a + t[..., None] * ab
    return np.linalg.norm(p - closest, axis=-1) - r


def _smooth_min(d1: np.ndarray, d2: np.ndarray, k: float) -> np.ndarray:
    h = np.maximum(k - np.abs(d1 - d2), 0.0) / k
    return np.minimum(d1, d2) - h * h * k * 0.25


def _surface_relief(p: np.ndarray) -> np.ndarray:
    """Multi-scale displacement giving the body scan-like surface detail.

    Bare capsules produce a geodesic structure whose variance lives in a
    few dozen eigendimensions; the relief octaves populate the higher
    embedding dimensions the way muscles and wrinkles do on real scans.
    Frequencies are incommensurate and phases asymmetric so no two body
    locations look alike. Wavelengths stay above ~3 marching-cubes cells.
    """
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    relief = 0.007 * np.sin(7.0 * x + 1.7) * np.sin(7.5 * y + 0.3) * np.sin(6.8 * z + 2.9)
    relief += 0.006 * np.sin(9.5 * x + 0.9) * np.sin(10.0 * y + 2.1) * np.sin(9.2 * z + 1.2)
    relief += 0.0055 * np.sin(11.5 * x + 0.2) * np.sin(12.0 * y + 1.5) * np.sin(11.2 * z + 0.8)
    relief += 0.0065 * np.sin(14.0 * x + 2.2) * np.sin(14.5 * y + 1.1) * np.sin(13.8 * z + 0.5)
    relief += 0.006 * np.sin(16.5 * x + 0.4) * np.sin(17.0 * y + 1.9) * np.sin(16.2 * z + 2.6)
    # Fade the relief out toward hands, feet, and crown: those regions are
    # what most vertices see as their farthest set, and keeping them smooth
    # keeps far-field orderings governed by the large-scale shape.
    ends = np.zeros_like(x)
    for c in _FINE_CENTERS:
        dist = np.linalg.norm(p - np.asarray(c, dtype=np.float64), axis=-1)
        ends = np.maximum(ends, _smoothstep((0.22 - dist) / 0.10))
    return relief * (1.0 - 0.9 * ends)


def _body_sdf(p: np.ndarray) -> np.ndarray:
    d = _capsule_sdf(p, *_TORSO)
    d = _smooth_min(d, _capsule_sdf(p, *_HEAD), _SMOOTH_K)
    for limb in _LIMBS:
        d = _smooth_min(d, _capsule_sdf(p, *limb), _SMOOTH_K)
    return d + _surface_relief(p)


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _pose_b_vertices(v: np.ndarray) -> np.ndarray:
    """Deform pose-A vertices: raise the arms ~20 degrees, slim the torso,
    lean the upper body ~10 degrees. Smooth weights keep the surface
    manifold; topology is untouched."""
    out = v.copy()
    x, z = v[:, 0], v[:, 2]

    arm_w = _smoothstep((np.abs(x) - 0.15) / 0.07)
    for side in (1.0, -1.0):
        pivot = np.array([side * 0.17, 0.0, 1.38])
        mask = (side * x > 0) & (arm_w > 0)
        if not mask.any():
            continue
        alpha = -side * np.radians(20.0) * arm_w[mask]
        ca, sa = np.cos(alpha), np.sin(alpha)
        rel = out[mask] - pivot
        rx = ca * rel[:, 0] + sa * rel[:, 2]
        rz = -sa * rel[:, 0] + ca * rel[:, 2]
        rel[:, 0], rel[:, 2] = rx, rz
        out[mask] = rel + pivot

    slim = np.exp(-(((z - 1.10) / 0.12) ** 2)) * (1.0 - arm_w)
    out[:, 0:2] *= (1.0 - 0.06 * slim)[:, None]

    lean_w = _smoothstep((out[:, 2] - 0.95) / 0.45)
    beta = np.radians(10.0) * lean_w
    cb, sb = np.cos(beta), np.sin(beta)
    y, dz = out[:, 1].copy(), out[:, 2] - 0.95
    out[:, 1] = cb * y - sb * dz
    out[:, 2] = 0.95 + sb * y + cb * dz
    return out


def humanoid(pose: str = "a", resolution: float = 0.035) -> TriMesh:
    """Watertight humanoid extracted from the capsule-skeleton distance
    field by marching cubes (requires scikit-image). Pose "a" is the rest
    extraction; pose "b" deforms the same vertices, preserving topology."""
    if pose not in ("a", "b"):
        raise ValueError(f"pose must be 'a' or 'b', got {pose!r}")
    from skimage.measure import marching_cubes

    h = resolution
    # The tiny origin offset keeps grid nodes off the exact zero level set.
    origin = np.array([-0.62, -0.40, -0.12]) + 1.7e-4
    nx = int(math.ceil((0.62 - origin[0]) / h)) + 1
    ny = int(math.ceil((0.40 - origin[1]) / h)) + 1
    nz = int(math.ceil((1.82 - origin[2]) / h)) + 1
    xs = origin[0] + h * np.arange(nx)
    ys = origin[1] + h * np.arange(ny)
    zs = origin[2] + h * np.arange(nz)
    gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
    pts = np.stack([gx, gy, gz], axis=-1)
    volume = _body_sdf(pts)

    verts, faces, _, _ = marching_cubes(volume, level=0.0, spacing=(h, h, h))
    verts = verts.astype(np.float64) + origin
    faces = faces.astype(np.int32)

    signed_volume = float(
        np.einsum(
            "ij,ij->",
            verts[faces[:, 0]],
            np.cross(verts[faces[:, 1]], verts[faces[:, 2]]),
        )
        / 6.0
    )
    if signed_volume < 0:
        faces = faces[:, [0, 2, 1]].copy()

    mesh = TriMesh(verts, faces)
    edges = build_edges(mesh)
    if len(edges.boundary_edges) or len(edges.nonmanifold_edges):
        raise RuntimeError(
            "humanoid extraction is not watertight: "
            f"{len(edges.boundary_edges)} boundary edges, "
            f"{len(edges.nonmanifold_edges)} non-manifold edges"
        )
    if pose == "b":
        mesh = mesh.with_vertices(_pose_b_vertices(mesh.vertices))
    return mesh


def humanoid_regions(template: TriMesh) -> dict[str, np.ndarray]:
    """Joint-region vertex sets on the pose-A humanoid, located by
    geometric predicates around the skeleton's joints."""
    v = template.vertices
    x, z = v[:, 0], v[:, 2]
    ax = np.abs(x)

    def ball(cx, cz, r):
        # 2D ball in (|x|, z): wraps the whole limb circumference and both
        # sides of the body at once.
        return np.flatnonzero((ax - cx) ** 2 + (z - cz) ** 2 < r * r)

    regions = {
        "armpits": ball(0.16, 1.31, 0.07),
        "elbows": ball(0.31, 1.215, 0.06),
        "waist": np.flatnonzero((np.abs(z - 0.95) <= 0.04) & (ax <= 0.16)),
        "knees": ball(0.105, 0.50, 0.06),
    }
    return {name: idx.astype(np.int64) for name, idx in regions.items()}


def shirt(n_theta: int = 32, n_rings: int = 14) -> TriMesh:
    """Open tube garment around the humanoid torso, clear of the arms,
    with an angular ripple as transferable surface detail."""
    return tube(
        n_theta,
        n_rings,
        SHIRT_RADIUS,
        SHIRT_Z[0],
        SHIRT_Z[1],
        ripple=SHIRT_RIPPLE,
        ripple_freq=SHIRT_RIPPLE_FREQ,
    )


def write_fixture_files(dest) -> dict[str, "Path"]:
    """Generate the on-disk fixture set used by the CLI tests and demo
    scripts: both humanoid poses, the shirt, and the joint-region file.
    Returns name -> path. Idempotent: existing complete sets are reused."""
    from pathlib import Path

    from .mesh import save_mesh

    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    paths = {
        "humanoid_a": dest / "humanoid_a.obj",
        "humanoid_b": dest / "humanoid_b.obj",
        "shirt_a": dest / "shirt_a.obj",
        "regions_a": dest / "regions_a.txt",
    }
    if all(p.exists() for p in paths.values()):
        return paths

    body_a = humanoid("a")
    body_b = humanoid("b")
    garment = shirt()
    regions = humanoid_regions(body_a)
    if any(len(idx) == 0 for idx in regions.values()):
        raise RuntimeError(f"empty joint region in {sorted(regions)}")

    save_mesh(body_a, paths["humanoid_a"])
    save_mesh(body_b, paths["humanoid_b"])
    save_mesh(garment, paths["shirt_a"])
    lines = [
        f"{name} {int(i)}"
        for name in sorted(regions)
        for i in regions[name]
    ]
    paths["regions_a"].write_text("\n".join(lines) + "\n", encoding="utf-8")
    return paths
