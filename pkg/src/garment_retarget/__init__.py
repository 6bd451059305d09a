"""Garment retargeting through geodesic embeddings.

The package retargets a garment mesh onto a new body in three stages:
coarse placement via nearest neighbors in a geodesic (Isomap) embedding of
a shared body template, loss-driven refinement of the placed mesh, and
Laplacian transfer of high-frequency detail from the source garment.
"""

from .correspondence import (
    CorrespondenceMap,
    RegisteredPair,
    coarse_retarget,
    correspond,
    extrapolate_embedding,
    load_correspondence,
    save_correspondence,
)
from .detail import (
    detail_integrate,
    laplacian_coords,
    load_anchors,
    pick_anchors,
    solve_system,
    uniform_laplacian,
)
from .errors import (
    EmbeddingWarning,
    FormatError,
    GarmentRetargetError,
    MeshWarning,
    NumericError,
    ValidationError,
)
from .geodesics import GeodesicMatrix, geodesic_matrix, load_geodesics, save_geodesics
from .isomap import (
    VertexEmbedding,
    embedding_distances,
    isomap,
    load_embedding,
    save_embedding,
)
from .knn import inverse_distance_weights, knn_search
from .mesh import EdgeSet, TriMesh, build_edges, load_mesh, save_mesh, vertex_normals
from .metrics import (
    ChamferResult,
    MetricsReport,
    RichnessInput,
    chamfer,
    compute_metrics,
    euclidean_distance,
    interpenetration_ratio,
    normal_consistency,
    point_to_surface,
    richness_score,
    winding_numbers,
)
from .refine import (
    JointMask,
    RefineConfig,
    RefineResult,
    bend_loss,
    correspondence_loss,
    edge_length_loss,
    joint_edge_weights,
    load_regions,
    refine,
)

__version__ = "0.1.0"

__all__ = [
    "ChamferResult",
    "CorrespondenceMap",
    "EdgeSet",
    "EmbeddingWarning",
    "FormatError",
    "GarmentRetargetError",
    "GeodesicMatrix",
    "JointMask",
    "MeshWarning",
    "MetricsReport",
    "NumericError",
    "RefineConfig",
    "RefineResult",
    "RegisteredPair",
    "RichnessInput",
    "TriMesh",
    "ValidationError",
    "VertexEmbedding",
    "bend_loss",
    "build_edges",
    "chamfer",
    "coarse_retarget",
    "compute_metrics",
    "correspond",
    "correspondence_loss",
    "detail_integrate",
    "edge_length_loss",
    "embedding_distances",
    "euclidean_distance",
    "extrapolate_embedding",
    "geodesic_matrix",
    "interpenetration_ratio",
    "inverse_distance_weights",
    "isomap",
    "joint_edge_weights",
    "knn_search",
    "laplacian_coords",
    "load_anchors",
    "load_correspondence",
    "load_embedding",
    "load_geodesics",
    "load_mesh",
    "load_regions",
    "normal_consistency",
    "pick_anchors",
    "point_to_surface",
    "refine",
    "richness_score",
    "save_correspondence",
    "save_embedding",
    "save_geodesics",
    "save_mesh",
    "solve_system",
    "uniform_laplacian",
    "vertex_normals",
    "winding_numbers",
]
