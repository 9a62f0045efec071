"""Spectral shape analysis of raw point clouds: a symmetric point-cloud Laplacian,
heat kernel signatures, signature-driven segmentation and shape retrieval."""

__version__ = "0.1.0"

from .errors import (AmbiguityError, DegenerateNeighborhoodError, DisconnectedModelError,  # noqa: E402
                     IncompatibleParametersError, InsufficientSamplingError, InvalidInputError, LapshapeError,
                     MemoryGuardError, PipelineError, SolverError, UnsupportedFormatError)
from .geometry import (PointCloud, detect_sharp_edges, estimate_normals, estimate_spacing,  # noqa: E402
                       max_normal_angle, normalize_to_unit_box)
from .laplacian import EigenSystem, SpclOperator, assemble_spcl, resolve_radius, solve_eigs  # noqa: E402
from .signatures import (FeatureVector, HeatKernelMatrix, HksField, build_feature_vector,  # noqa: E402
                         compute_heat_kernel, compute_hks, default_t_scales)
from .segmentation import (PersistencePair, Segmentation, clustering_balance, curvature_segment,  # noqa: E402
                           heat_walk, heat_walk_segmentation, persistence_segment, recluster_by_type,
                           remove_small_segments, tau_for_segment_count)
from .retrieval import (DescriptorIndex, DescriptorRecord, fv_distance, index_model,  # noqa: E402
                        retrieve_top_k, top_k_hit_rate)
from .synthetic import NoiseSpec, add_noise, generate_primitive  # noqa: E402
from .config import RunConfig  # noqa: E402

__all__ = [
    "add_noise",
    "AmbiguityError",
    "assemble_spcl",
    "build_feature_vector",
    "clustering_balance",
    "compute_heat_kernel",
    "compute_hks",
    "curvature_segment",
    "default_t_scales",
    "DegenerateNeighborhoodError",
    "DescriptorIndex",
    "DescriptorRecord",
    "detect_sharp_edges",
    "DisconnectedModelError",
    "EigenSystem",
    "estimate_normals",
    "estimate_spacing",
    "FeatureVector",
    "fv_distance",
    "generate_primitive",
    "heat_walk",
    "heat_walk_segmentation",
    "HeatKernelMatrix",
    "HksField",
    "IncompatibleParametersError",
    "index_model",
    "InsufficientSamplingError",
    "InvalidInputError",
    "LapshapeError",
    "max_normal_angle",
    "MemoryGuardError",
    "NoiseSpec",
    "normalize_to_unit_box",
    "persistence_segment",
    "PersistencePair",
    "PipelineError",
    "PointCloud",
    "recluster_by_type",
    "remove_small_segments",
    "resolve_radius",
    "retrieve_top_k",
    "RunConfig",
    "Segmentation",
    "solve_eigs",
    "SolverError",
    "SpclOperator",
    "tau_for_segment_count",
    "top_k_hit_rate",
    "UnsupportedFormatError",
]
