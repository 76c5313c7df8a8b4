"""Measurement model, triangulation and the stacked EKF update."""

from .ekf import (
    LinearizedFeature,
    chi2_threshold,
    chi_square_gate,
    ekf_update,
    left_null_space,
    observability_project_H,
    qr_compress,
    stack_and_project,
)
from .marginalization import select_marginalize
from .measurement import (
    FeatureRejected,
    FeatureTrack,
    StereoObservation,
    measurement_jacobians,
    predict_measurement,
    transform_feature,
)
from .pipeline import UpdateDiagnostics, linearize_feature, remove_cam_states, run_update_step, yaw_variance
from .triangulation import TriangulationConfig, TriangulationResult, triangulate

__all__ = [
    "FeatureRejected", "FeatureTrack", "LinearizedFeature", "StereoObservation",
    "TriangulationConfig", "TriangulationResult", "UpdateDiagnostics",
    "chi2_threshold", "chi_square_gate", "ekf_update", "left_null_space",
    "linearize_feature", "measurement_jacobians", "observability_project_H",
    "predict_measurement", "qr_compress", "remove_cam_states", "run_update_step",
    "select_marginalize", "stack_and_project", "transform_feature", "triangulate",
    "yaw_variance",
]
