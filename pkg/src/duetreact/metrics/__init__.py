"""Evaluation metrics for generated duets."""
from .distribution import GaussianStats, diversity, fid, fid_from_features, gaussian_stats
from .features import (CROSS_DIM, CROSS_JOINTS, GEOMETRIC_DIM, GEOMETRIC_NAMES, KINETIC_DIM, cross_distance_features,
                       geometric_descriptors, geometric_features, kinetic_features)
from .report import ALIGNED, COLUMNS, MetricsConfig, evaluate, summary, to_csv
from .rhythm import (beat_align_from_beats, beat_align_score, beat_echo_degree, contact_frequency, kinematic_beats,
                     motion_speed, mpjpe_mpjve)

__all__ = [name for name in dir() if not name.startswith("_")]
