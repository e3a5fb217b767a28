"""Clustering toolkit for sparse FFN activation patterns."""

from .awc import ClusteringConfig, ClusteringResult, cluster_awc
from .baselines import BaselineConfig, cluster_bmf, cluster_brb_kmeans
from .codebook import Assignment, Centroid, CentroidSet
from .costmodel import CostModelParams
from .metrics import MetricsReport, build_report, clustering_error, clustering_precision
from .patterns import BinarySupportMatrix, PatternMatrix, apply_magnitude_threshold, support_of
from .synthetic import SyntheticSpec, generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "Assignment",
    "BaselineConfig",
    "BinarySupportMatrix",
    "Centroid",
    "CentroidSet",
    "ClusteringConfig",
    "ClusteringResult",
    "CostModelParams",
    "MetricsReport",
    "PatternMatrix",
    "SyntheticSpec",
    "apply_magnitude_threshold",
    "build_report",
    "clustering_error",
    "clustering_precision",
    "cluster_awc",
    "cluster_bmf",
    "cluster_brb_kmeans",
    "generate_synthetic",
    "support_of",
]
