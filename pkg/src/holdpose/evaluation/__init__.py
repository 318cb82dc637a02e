"""Split protocols, metrics, dataset statistics, experiment sweeps and reports."""

from .metrics import ConstantClassifier, Metrics, ModelClassifier, evaluate, majority_baseline, score
from .splits import (
    Protocol,
    SplitError,
    SplitManifest,
    audit,
    make_split,
    object_combinations,
    split_pose_group,
    split_random_poses,
    split_uniform,
    split_unseen_objects,
)
from .stats import DatasetStats, PhaseRow, dataset_statistics, row_from_counts

__all__ = [
    "ConstantClassifier", "DatasetStats", "Metrics", "ModelClassifier", "PhaseRow", "Protocol", "SplitError",
    "SplitManifest", "audit", "dataset_statistics", "evaluate", "majority_baseline", "make_split",
    "object_combinations", "row_from_counts", "score", "split_pose_group", "split_random_poses", "split_uniform",
    "split_unseen_objects",
]
