"""Probabilistic intersection traffic models from observed trajectories.

Learns, from noisy and non-uniformly sampled vehicle tracks, a Gaussian
process model of each behavior class at an intersection (right turn, left
turn, straight) and classifies partially observed vehicles online against
that model.
"""

__version__ = "0.1.0"

from .classifier import (
    Decision,
    OnlineClassifier,
    batch_classify,
    classification_time,
)
from .clustering import ClusterLabeling, canonicalize_labels, endpoint_features, kmeans_pp
from .gp import (
    GPPosterior,
    ReconstructedTrajectory,
    TrajectorySet,
    WienerVelocityKernel,
    build_trajectory_set,
    fit_posterior,
    optimize_hyperparameters,
    reconstruct,
)
from .metrics import GaussianDist, mahalanobis, wasserstein, wasserstein_barycenter
from .simgen import GeneratorConfig, generate, write_dataset
from .traffic_model import (
    LEFT,
    RIGHT,
    STRAIGHT,
    Intention,
    IntendedTrajectory,
    TimeGrid,
    TrafficModel,
    build_intended,
    build_model,
    load_model,
    sample_intention,
    save_model,
)
from .trajectory_data import (
    PreprocessConfig,
    RawTrajectory,
    Sample,
    homogenize,
    load_dataset,
    normalize_start_time,
)

__all__ = [
    "__version__",
    "Sample",
    "RawTrajectory",
    "PreprocessConfig",
    "load_dataset",
    "normalize_start_time",
    "homogenize",
    "WienerVelocityKernel",
    "GPPosterior",
    "ReconstructedTrajectory",
    "TrajectorySet",
    "fit_posterior",
    "optimize_hyperparameters",
    "reconstruct",
    "build_trajectory_set",
    "GaussianDist",
    "wasserstein",
    "mahalanobis",
    "wasserstein_barycenter",
    "ClusterLabeling",
    "endpoint_features",
    "kmeans_pp",
    "canonicalize_labels",
    "RIGHT",
    "LEFT",
    "STRAIGHT",
    "TimeGrid",
    "IntendedTrajectory",
    "TrafficModel",
    "Intention",
    "build_intended",
    "build_model",
    "sample_intention",
    "save_model",
    "load_model",
    "Decision",
    "OnlineClassifier",
    "classification_time",
    "batch_classify",
    "GeneratorConfig",
    "generate",
    "write_dataset",
]
