"""Spatiotemporal features for event-camera streams.

Sparse box-neighbourhood spike counts are compressed with PCA, used to mine
point matches, and refined with pairwise slow feature analysis into
projections that stay stable along a moving feature point. The package
also ships a single-pixel-step tracker, a time-surface baseline, synthetic
scenes with ground truth and accuracy metrics.
"""

from .evaluation import Curve, accuracy_curve, displacement_curve, export_curve, load_curve
from .events import Event, EventStream, filter_noise, load_events, write_events
from .matching import DisplacementSet, MatchPair, extract_all_matches, extract_match
from .pipeline import PipelineConfig, evaluate, train, track_all
from .scene import ControlPoint, SceneSpec, Trajectory, TrajectorySet, synthesize_scene
from .subspace import ProjectionBasis, extract_feature, fit_pca, fit_sfa, smooth_basis
from .tracker import time_surface_dissimilarity, time_surface_feature, track_point, track_point_ts
from .voxel import BoxSpec, convolve3d, gaussian_kernel, spike_count_matrix, verify_projection_identity

__version__ = "0.1.0"

__all__ = [
    "BoxSpec",
    "ControlPoint",
    "Curve",
    "DisplacementSet",
    "Event",
    "EventStream",
    "MatchPair",
    "PipelineConfig",
    "ProjectionBasis",
    "SceneSpec",
    "Trajectory",
    "TrajectorySet",
    "accuracy_curve",
    "convolve3d",
    "displacement_curve",
    "evaluate",
    "export_curve",
    "extract_all_matches",
    "extract_feature",
    "extract_match",
    "filter_noise",
    "fit_pca",
    "fit_sfa",
    "gaussian_kernel",
    "load_curve",
    "load_events",
    "smooth_basis",
    "spike_count_matrix",
    "synthesize_scene",
    "time_surface_dissimilarity",
    "time_surface_feature",
    "track_all",
    "track_point",
    "track_point_ts",
    "train",
    "verify_projection_identity",
    "write_events",
]
