"""Loss-driven refinement of a coarse retargeting.

The coarse correspondence map places garment vertices on the target body
but ignores garment structure. This module optimizes per-vertex
displacements of the coarse positions under three terms: preserve rest
edge lengths (except across joint regions), stay close to where the
correspondence chain re-maps the current surface, and keep adjacent faces
flat. Each term supplies an analytic gradient; a gradient-descent loop
with backtracking line search drives the total down, accepting a step only
when the freshly evaluated loss decreases, so the recorded history is
monotone by construction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .correspondence import RegisteredPair
from .errors import FormatError, NumericError, ValidationError
from .isomap import VertexEmbedding
from .knn import SNAP_DISTANCE, indexed_distances, knn_search
from .mesh import EdgeSet, TriMesh, build_edges

VALID_REGIONS = ("elbows", "armpits", "waist", "knees")

DEFAULT_K = 32

# A face whose normal (cross product, twice the area) is shorter than this
# cannot be oriented; bend terms over its edges are skipped.
MIN_NORMAL_NORM = 1e-15

# Edges shorter than this give no usable stretch direction; their length
# gradient is dropped (the loss value still counts them).
_MIN_EDGE_FOR_GRAD = 1e-12

_ARMIJO_C = 1e-4
_MAX_HALVINGS = 40
_STOP_WINDOW = 10


@dataclass(frozen=True)
class JointMask:
    """Template vertex sets for body regions whose garment edges should not
    resist stretching (sleeves over elbows and the like)."""

    regions: dict[str, frozenset[int]]

    def __post_init__(self):
        coerced = {}
        for name, verts in self.regions.items():
            if name not in VALID_REGIONS:
                raise ValidationError(
                    f"unknown region {name!r}; valid regions: {', '.join(VALID_REGIONS)}"
                )
            coerced[name] = frozenset(int(v) for v in verts)
        object.__setattr__(self, "regions", coerced)

    @property
    def vertex_union(self) -> frozenset[int]:
        out: frozenset[int] = frozenset()
        for verts in self.regions.values():
            out |= verts
        return out


def load_regions(path) -> JointMask:
    """Region file: one `region_name vertex_index` pair per line; blank
    lines and `#` comments are ignored."""
    regions: dict[str, set[int]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != 2:
                raise FormatError(
                    f"{path}:{lineno}: expected 'region_name vertex_index', got {line.strip()!r}"
                )
            name, raw_idx = parts
            if name not in VALID_REGIONS:
                raise FormatError(
                    f"{path}:{lineno}: unknown region {name!r}; "
                    f"valid regions: {', '.join(VALID_REGIONS)}"
                )
            try:
                idx = int(raw_idx)
            except ValueError:
                raise FormatError(
                    f"{path}:{lineno}: vertex index {raw_idx!r} is not an integer"
                ) from None
            if idx < 0:
                raise FormatError(f"{path}:{lineno}: negative vertex index {idx}")
            regions.setdefault(name, set()).add(idx)
    return JointMask(regions={k: frozenset(v) for k, v in regions.items()})


@dataclass(frozen=True)
class RefineConfig:
    """Weights and optimizer knobs for the refinement loop."""

    lambda_length: float = 1.0
    lambda_corres: float = 1.0
    lambda_bend: float = 0.05
    k: int = DEFAULT_K
    step: float = 1.0
    max_iters: int = 500
    tol: float = 1e-6

    def __post_init__(self):
        lams = (self.lambda_length, self.lambda_corres, self.lambda_bend)
        if any(l < 0 for l in lams):
            raise ValidationError(f"loss weights must be non-negative, got {lams}")
        if not any(l > 0 for l in lams):
            raise ValidationError("at least one loss weight must be positive")
        if self.step <= 0:
            raise ValidationError(f"step size must be positive, got {self.step}")
        if self.max_iters < 1:
            raise ValidationError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.tol <= 0:
            raise ValidationError(f"tolerance must be positive, got {self.tol}")
        if self.k < 1:
            raise ValidationError(f"k must be >= 1, got {self.k}")


@dataclass
class RefineState:
    """Mutable optimizer state: coarse base positions, current
    displacements, last accepted loss breakdown, iteration counter."""

    x: np.ndarray
    delta: np.ndarray
    breakdown: dict[str, float]
    iteration: int = 0

    @property
    def positions(self) -> np.ndarray:
        return self.x + self.delta


@dataclass(frozen=True)
class RefineResult:
    mesh: TriMesh
    history: np.ndarray
    term_history: dict[str, np.ndarray]
    breakdown: dict[str, float]
    iterations: int
    stop_reason: str


def joint_edge_weights(
    garment: TriMesh,
    garment_template_instance: TriMesh,
    mask: JointMask,
    edges: EdgeSet | None = None,
) -> np.ndarray:
    """Per-edge weights for the length loss: 0 when both endpoints map to
    joint-region template vertices, else 1.

    Each garment vertex maps to its nearest template-instance vertex
    (Euclidean, ties to the smaller index)."""
    if edges is None:
        edges = build_edges(garment)
    n_template = garment_template_instance.num_vertices
    union = mask.vertex_union
    if union and max(union) >= n_template:
        raise ValidationError(
            f"region vertex index {max(union)} out of range for template "
            f"with {n_template} vertices"
        )
    w = np.ones(edges.num_edges, dtype=np.float64)
    if not union:
        warnings.warn(
            "joint mask has no region vertices; all edge weights are 1",
            UserWarning,
            stacklevel=2,
        )
        return w
    nearest, _ = knn_search(
        garment_template_instance.vertices, garment.vertices, 1
    )
    in_region = np.zeros(n_template, dtype=bool)
    in_region[list(union)] = True
    vertex_masked = in_region[nearest[:, 0]]
    both = vertex_masked[edges.edges[:, 0]] & vertex_masked[edges.edges[:, 1]]
    w[both] = 0.0
    return w


def edge_length_loss(
    garment: TriMesh,
    positions: np.ndarray,
    weights: np.ndarray | None = None,
    edges: EdgeSet | None = None,
) -> tuple[float, np.ndarray]:
    """Mean weighted absolute deviation of edge lengths from the garment's
    rest lengths, averaged over all edges (weighted-out edges still count
    in the denominator), plus its gradient in the refined positions."""
    if edges is None:
        edges = build_edges(garment)
    positions = np.asarray(positions, dtype=np.float64)
    if len(positions) != garment.num_vertices:
        raise ValidationError(
            f"positions cover {len(positions)} vertices, garment has {garment.num_vertices}"
        )
    m = edges.num_edges
    grad = np.zeros_like(positions)
    if m == 0:
        return 0.0, grad
    if weights is None:
        weights = np.ones(m, dtype=np.float64)
    elif len(weights) != m:
        raise ValidationError(f"{len(weights)} weights for {m} edges")
    a, b = edges.edges[:, 0], edges.edges[:, 1]
    vec = positions[b] - positions[a]
    length = np.linalg.norm(vec, axis=1)
    diff = length - edges.lengths
    loss = float(np.sum(weights * np.abs(diff)) / m)

    scale = weights * np.sign(diff) / m
    usable = length > _MIN_EDGE_FOR_GRAD
    direction = np.zeros_like(vec)
    direction[usable] = vec[usable] / length[usable, None]
    contrib = scale[:, None] * direction
    np.add.at(grad, b, contrib)
    np.add.at(grad, a, -contrib)
    return loss, grad


def bend_loss(
    garment: TriMesh,
    positions: np.ndarray,
    edges: EdgeSet | None = None,
) -> tuple[float, np.ndarray]:
    """Mean over interior edges of 1 - cos(angle between adjacent face
    normals); zero exactly when every adjacent pair is coplanar with
    consistent orientation. Edges touching a degenerate (zero-area) face
    are skipped, counted, and warned about."""
    if edges is None:
        edges = build_edges(garment)
    positions = np.asarray(positions, dtype=np.float64)
    if len(positions) != garment.num_vertices:
        raise ValidationError(
            f"positions cover {len(positions)} vertices, garment has {garment.num_vertices}"
        )
    grad = np.zeros_like(positions)
    if len(edges.interior_edges) == 0:
        return 0.0, grad

    f = garment.faces
    p = positions[f]
    ea = p[:, 1] - p[:, 0]
    eb = p[:, 2] - p[:, 0]
    cross = np.cross(ea, eb)
    norm = np.linalg.norm(cross, axis=1)
    ok_face = norm > MIN_NORMAL_NORM
    normals = np.zeros_like(cross)
    normals[ok_face] = cross[ok_face] / norm[ok_face, None]

    fa, fb = edges.interior_faces[:, 0], edges.interior_faces[:, 1]
    valid = ok_face[fa] & ok_face[fb]
    skipped = int(np.count_nonzero(~valid))
    if skipped:
        warnings.warn(
            f"bend loss skipped {skipped} interior edges touching degenerate faces",
            UserWarning,
            stacklevel=2,
        )
    count = int(np.count_nonzero(valid))
    if count == 0:
        return 0.0, grad
    fa, fb = fa[valid], fb[valid]
    dots = np.einsum("ij,ij->i", normals[fa], normals[fb])
    loss = float(np.sum(1.0 - dots) / count)

    # d loss / d cross_f accumulated per face: project the mean opposing
    # normal out of n_f and divide by |cross_f|.
    g_face = np.zeros_like(cross)
    np.add.at(g_face, fa, -normals[fb] / count)
    np.add.at(g_face, fb, -normals[fa] / count)
    h_face = np.zeros_like(cross)
    proj = np.einsum("ij,ij->i", normals[ok_face], g_face[ok_face])
    h_face[ok_face] = (
        g_face[ok_face] - normals[ok_face] * proj[:, None]
    ) / norm[ok_face, None]

    d1 = np.cross(eb, h_face)
    d2 = np.cross(h_face, ea)
    np.add.at(grad, f[:, 1], d1)
    np.add.at(grad, f[:, 2], d2)
    np.add.at(grad, f[:, 0], -(d1 + d2))
    return loss, grad


@dataclass(frozen=True)
class CorresNeighborhoods:
    """Frozen neighbor sets for the two stages of the correspondence chain:
    template-instance neighbors in 3D, then target neighbors in feature
    space. Freezing the sets makes the loss piecewise smooth so its
    gradient is well-defined."""

    template_idx: np.ndarray
    feature_idx: np.ndarray


def _idw_rows(dist: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Inverse-distance weights for rows whose neighbor order may not be
    sorted (frozen sets evaluated away from the freeze point). Matches
    `inverse_distance_weights` bitwise on sorted input."""
    min_col = dist.argmin(axis=1)
    rows = np.arange(len(dist))
    snapped = dist[rows, min_col] < SNAP_DISTANCE
    safe = np.where(dist < SNAP_DISTANCE, np.inf, dist)
    inv = 1.0 / safe
    w = np.zeros_like(dist)
    reg = ~snapped
    w[reg] = inv[reg] / inv[reg].sum(axis=1, keepdims=True)
    w[snapped, min_col[snapped]] = 1.0
    return w, snapped, min_col


def _corres_chain(
    positions: np.ndarray,
    target: RegisteredPair,
    target_embedding: VertexEmbedding,
    k: int,
    frozen: CorresNeighborhoods | None,
):
    """Run the two-stage correspondence chain at `positions`.

    Returns everything the loss and gradient need; with `frozen` the
    neighbor sets are taken as given, otherwise they are searched fresh.
    """
    template_pts = target.template_instance.vertices
    template_phi = target.template_embedding.phi
    target_phi = target_embedding.phi
    target_pts = target.surface.vertices

    if frozen is None:
        idx_a, dist_a = knn_search(template_pts, positions, k)
    else:
        idx_a = frozen.template_idx
        dist_a = indexed_distances(template_pts, positions, idx_a)
    w_a, snap_a, col_a = _idw_rows(dist_a)
    phi = np.einsum("ij,ijk->ik", w_a, template_phi[idx_a])
    if snap_a.any():
        rows = np.flatnonzero(snap_a)
        phi[rows] = template_phi[idx_a[rows, col_a[rows]]]

    if frozen is None:
        idx_b, dist_b = knn_search(target_phi, phi, k)
    else:
        idx_b = frozen.feature_idx
        dist_b = indexed_distances(target_phi, phi, idx_b)
    w_b, snap_b, col_b = _idw_rows(dist_b)
    points = np.einsum("ij,ijk->ik", w_b, target_pts[idx_b])
    if snap_b.any():
        rows = np.flatnonzero(snap_b)
        points[rows] = target_pts[idx_b[rows, col_b[rows]]]

    return idx_a, dist_a, phi, snap_a, idx_b, dist_b, points, snap_b


def freeze_corres_neighborhoods(
    positions: np.ndarray,
    target: RegisteredPair,
    target_embedding: VertexEmbedding,
    k: int = DEFAULT_K,
) -> CorresNeighborhoods:
    """Capture the neighbor sets the chain selects at `positions`."""
    positions = np.asarray(positions, dtype=np.float64)
    idx_a, _, _, _, idx_b, _, _, _ = _corres_chain(
        positions, target, target_embedding, k, None
    )
    return CorresNeighborhoods(template_idx=idx_a, feature_idx=idx_b)


def correspondence_loss(
    positions: np.ndarray,
    target: RegisteredPair,
    target_embedding: VertexEmbedding,
    coarse_positions: np.ndarray,
    k: int = DEFAULT_K,
    frozen: CorresNeighborhoods | None = None,
) -> tuple[float, np.ndarray]:
    """Mean distance between the coarse positions and where the chain
    re-maps the current surface, with the gradient in the current
    positions.

    The chain extrapolates a feature row for each current vertex from the
    target's template instance, then maps it onto the target exactly as
    coarse correspondence does; with `frozen=None` the value equals
    composing those two public operations. Vertices that snap (coincide
    with a template vertex in 3D or with a target row in feature space)
    are hard copies, so their gradient is zero.
    """
    positions = np.asarray(positions, dtype=np.float64)
    coarse_positions = np.asarray(coarse_positions, dtype=np.float64)
    if positions.shape != coarse_positions.shape:
        raise ValidationError(
            f"positions {positions.shape} and coarse {coarse_positions.shape} disagree"
        )
    if target_embedding.n != target.surface.num_vertices:
        raise ValidationError(
            f"target embedding covers {target_embedding.n} vertices, "
            f"surface has {target.surface.num_vertices}"
        )
    if target_embedding.d != target.template_embedding.d:
        raise ValidationError(
            f"feature dimension mismatch: target {target_embedding.d}, "
            f"template {target.template_embedding.d}"
        )
    n = len(positions)
    if n == 0:
        return 0.0, np.zeros_like(positions)

    idx_a, dist_a, phi, snap_a, idx_b, dist_b, points, snap_b = _corres_chain(
        positions, target, target_embedding, k, frozen
    )

    residual = points - coarse_positions
    rho = np.linalg.norm(residual, axis=1)
    loss = float(rho.mean())

    # Gradient via the chain; rows that snapped anywhere are hard copies
    # with zero gradient, and zero-residual rows sit at the kink of the
    # norm where we take the zero subgradient.
    live = ~(snap_a | snap_b) & (rho > 0.0)
    grad = np.zeros_like(positions)
    if not live.any():
        return loss, grad

    template_pts = target.template_instance.vertices
    template_phi = target.template_embedding.phi
    target_phi = target_embedding.phi
    target_pts = target.surface.vertices

    la = np.flatnonzero(live)
    d_loss_points = residual[la] / (rho[la, None] * n)

    with np.errstate(divide="ignore", invalid="ignore"):
        # feature-space stage: d loss / d phi
        db = dist_b[la]
        sum_inv_b = (1.0 / db).sum(axis=1)
        g_b = -(phi[la, None, :] - target_phi[idx_b[la]]) / (db**3)[:, :, None]
        proj_b = np.einsum(
            "ikj,ij->ik", target_pts[idx_b[la]] - points[la, None, :], d_loss_points
        )
        d_loss_phi = np.einsum("ik,ikd->id", proj_b / sum_inv_b[:, None], g_b)

        # 3D stage: d loss / d positions
        da = dist_a[la]
        sum_inv_a = (1.0 / da).sum(axis=1)
        g_a = -(positions[la, None, :] - template_pts[idx_a[la]]) / (da**3)[:, :, None]
        proj_a = np.einsum(
            "ikd,id->ik", template_phi[idx_a[la]] - phi[la, None, :], d_loss_phi
        )
        grad[la] = np.einsum("ik,ikj->ij", proj_a / sum_inv_a[:, None], g_a)
    return loss, grad


def refine(
    coarse: TriMesh,
    garment: RegisteredPair,
    target: RegisteredPair,
    target_embedding: VertexEmbedding,
    mask: JointMask | None,
    cfg: RefineConfig,
) -> RefineResult:
    """Descend the weighted total loss over per-vertex displacements.

    Starts from zero displacement on the coarse positions. Each iteration
    takes the analytic gradient (correspondence neighbor sets frozen at the
    current point), then backtracks a step until the freshly evaluated
    total loss satisfies a sufficient-decrease test; the accepted-loss
    history is therefore non-increasing. Stops at the iteration cap, when
    the relative decrease over the last 10 accepted steps falls below the
    tolerance, or when no step length gives a decrease.
    """
    rest = garment.surface
    if coarse.num_vertices != rest.num_vertices:
        raise ValidationError(
            f"coarse mesh has {coarse.num_vertices} vertices, garment has {rest.num_vertices}"
        )
    if coarse.topology_hash() != rest.topology_hash():
        raise ValidationError("coarse mesh and garment disagree on topology")

    edges = build_edges(rest)
    if mask is not None:
        w = joint_edge_weights(rest, garment.template_instance, mask, edges)
    else:
        w = np.ones(edges.num_edges, dtype=np.float64)

    use_length = cfg.lambda_length > 0
    use_corres = cfg.lambda_corres > 0
    use_bend = cfg.lambda_bend > 0
    x = coarse.vertices.copy()

    def evaluate(pos, frozen=None):
        terms = {"length": 0.0, "corres": 0.0, "bend": 0.0}
        grads = {}
        if use_length:
            terms["length"], grads["length"] = edge_length_loss(rest, pos, w, edges)
        if use_corres:
            terms["corres"], grads["corres"] = correspondence_loss(
                pos, target, target_embedding, x, cfg.k, frozen
            )
        if use_bend:
            terms["bend"], grads["bend"] = bend_loss(rest, pos, edges)
        total = float(
            cfg.lambda_length * terms["length"]
            + cfg.lambda_corres * terms["corres"]
            + cfg.lambda_bend * terms["bend"]
        )
        grad = np.zeros_like(pos)
        for name, lam in (
            ("length", cfg.lambda_length),
            ("corres", cfg.lambda_corres),
            ("bend", cfg.lambda_bend),
        ):
            if name in grads:
                grad += lam * grads[name]
        return total, terms, grad

    state = RefineState(x=x, delta=np.zeros_like(x), breakdown={})
    total, terms, _ = evaluate(state.positions)
    state.breakdown = dict(terms)
    history = [total]
    term_history = {name: [terms[name]] for name in terms}
    stop_reason = "max-iterations"
    step = cfg.step

    for it in range(cfg.max_iters):
        state.iteration = it
        pos = state.positions
        frozen = (
            freeze_corres_neighborhoods(pos, target, target_embedding, cfg.k)
            if use_corres
            else None
        )
        total, terms, grad = evaluate(pos, frozen)
        if not np.isfinite(grad).all():
            bad = {name: float(t) for name, t in terms.items()}
            raise NumericError(
                f"non-finite gradient at iteration {it}; loss breakdown: {bad}"
            )
        gnorm = float(np.sqrt(np.einsum("ij,ij->", grad, grad)))
        if gnorm == 0.0:
            stop_reason = "zero-gradient"
            break
        # Normalized steepest-descent direction: the step length is in
        # geometry units regardless of how the loss terms scale with mesh
        # size, which keeps one step-size default usable everywhere.
        direction = grad / gnorm

        accepted = False
        t = step
        for _ in range(_MAX_HALVINGS):
            trial = state.delta - t * direction
            trial_total, trial_terms, _ = evaluate(state.x + trial)
            if trial_total <= total - _ARMIJO_C * t * gnorm:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            stop_reason = "line-search-failure"
            break

        state.delta = trial
        state.breakdown = dict(trial_terms)
        history.append(trial_total)
        for name in term_history:
            term_history[name].append(trial_terms[name])
        # warm-start the next line search near the accepted step
        step = min(cfg.step, 4.0 * t)

        if len(history) > _STOP_WINDOW:
            prev = history[-_STOP_WINDOW - 1]
            cur = history[-1]
            rel = (prev - cur) / max(abs(prev), np.finfo(np.float64).tiny)
            if rel < cfg.tol:
                stop_reason = "converged"
                break

    mesh = coarse.with_vertices(state.positions, validate=False)
    return RefineResult(
        mesh=mesh,
        history=np.asarray(history, dtype=np.float64),
        term_history={k_: np.asarray(v, dtype=np.float64) for k_, v in term_history.items()},
        breakdown=dict(state.breakdown),
        iterations=len(history) - 1,
        stop_reason=stop_reason,
    )
