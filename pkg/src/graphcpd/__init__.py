"""Graph-based change point detection for functional time series."""

from .detect import (
    AmocResult,
    DetectionConfig,
    SegmentationResult,
    amoc_test,
    binary_segmentation,
)
from .edgestats import StatKind, edge_counts, null_moments, scan
from .errors import CapacityError, GraphCPDError
from .fdata import (
    DistanceMatrix,
    FunctionalSample,
    PriceSample,
    cidr_transform,
    distance_matrix,
    lp_distance,
)
from .graphs import SimilarityGraph, TreeKind, build_k_graph, build_mdp, build_mst, build_nnl

__version__ = "0.1.0"

__all__ = [
    "AmocResult", "CapacityError", "DetectionConfig", "DistanceMatrix", "FunctionalSample",
    "GraphCPDError", "PriceSample", "SegmentationResult", "SimilarityGraph", "StatKind",
    "TreeKind", "amoc_test", "binary_segmentation", "build_k_graph", "build_mdp", "build_mst",
    "build_nnl", "cidr_transform", "distance_matrix", "edge_counts", "lp_distance",
    "null_moments", "scan",
]
