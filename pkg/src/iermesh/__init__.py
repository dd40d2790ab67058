"""Point-cloud meshing via intrinsic-extrinsic ratio candidate filtering."""

from .mesh import (
    EdgeKey,
    PointCloud,
    TriangleMesh,
    clean_mesh,
    edge_key,
    merge_close_vertices,
    normalize,
)
from .fileio import (
    ParseError,
    load_mesh,
    load_point_cloud,
    save_mesh,
    save_point_cloud,
)
from .sampling import (
    SampledPoint,
    SampleSet,
    add_noise,
    area_uniform_sample,
    poisson_disk_sample,
    poisson_radius_estimate,
    replicate_to_size,
)
from .geodesic import (
    GeodesicResult,
    crop_patch,
    exact_geodesics,
    geodesic_matrix,
    local_geodesics,
    oracle_geodesic_matrix,
    oracle_geodesics,
)
from .candidates import (
    CandidateSet,
    KnnGraph,
    LabelingParams,
    build_knn,
    candidate_dist_to_mesh,
    candidate_edges,
    dedup_points,
    ier_pair,
    ier_triangle,
    label_candidates,
    label_rule,
    load_candidates,
    propose_candidates,
    save_candidates,
    triangle_iers,
)
from .metrics import (
    EvalReport,
    chamfer,
    evaluate,
    exact_nearest,
    fscore,
    normal_consistency,
)
from .assembler import (
    MergeReport,
    Rejection,
    merge,
    sort_candidates,
    triangles_intersect,
    write_rejection_log,
)
from .classifier import (
    FEATURE_DIM,
    ClassifierWeights,
    Layer,
    confusion_matrix,
    extract_features,
    forward_logits,
    load_features,
    load_weights,
    oracle_classify,
    predict,
    save_features,
    save_weights,
)
from .pipeline import (
    PipelineConfig,
    ReconstructResult,
    RemeshResult,
    label_cloud,
    pair_geodesics,
    reconstruct,
    remesh,
    snap_to_mesh,
    steiner_insert,
)

__all__ = [
    "EdgeKey",
    "PointCloud",
    "TriangleMesh",
    "clean_mesh",
    "edge_key",
    "merge_close_vertices",
    "normalize",
    "ParseError",
    "load_mesh",
    "load_point_cloud",
    "save_mesh",
    "save_point_cloud",
    "SampledPoint",
    "SampleSet",
    "add_noise",
    "area_uniform_sample",
    "poisson_disk_sample",
    "poisson_radius_estimate",
    "replicate_to_size",
    "GeodesicResult",
    "crop_patch",
    "exact_geodesics",
    "geodesic_matrix",
    "local_geodesics",
    "oracle_geodesic_matrix",
    "oracle_geodesics",
    "CandidateSet",
    "KnnGraph",
    "LabelingParams",
    "build_knn",
    "candidate_dist_to_mesh",
    "candidate_edges",
    "dedup_points",
    "ier_pair",
    "ier_triangle",
    "label_candidates",
    "label_rule",
    "load_candidates",
    "propose_candidates",
    "save_candidates",
    "triangle_iers",
    "EvalReport",
    "chamfer",
    "evaluate",
    "exact_nearest",
    "fscore",
    "normal_consistency",
    "MergeReport",
    "Rejection",
    "merge",
    "sort_candidates",
    "triangles_intersect",
    "write_rejection_log",
    "FEATURE_DIM",
    "ClassifierWeights",
    "Layer",
    "confusion_matrix",
    "extract_features",
    "forward_logits",
    "load_features",
    "load_weights",
    "oracle_classify",
    "predict",
    "save_features",
    "save_weights",
    "PipelineConfig",
    "ReconstructResult",
    "RemeshResult",
    "label_cloud",
    "pair_geodesics",
    "reconstruct",
    "remesh",
    "snap_to_mesh",
    "steiner_insert",
]

__version__ = "0.1.0"
