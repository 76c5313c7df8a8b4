"""Synthetic trajectories, IMU data, stereo tracks and CSV I/O."""

from .io import (
    CsvParseError,
    TrackFrames,
    ingest_imu_csv,
    ingest_tracks_csv,
    ingest_truth_csv,
    write_imu_csv,
    write_scenario,
    write_tracks_csv,
    write_truth_csv,
)
from .scenario import (
    CameraModel,
    Scenario,
    ScenarioConfig,
    TrackGenerator,
    TrackTable,
    generate_landmarks,
    noiseless,
    observe,
    project_landmarks,
    simulate,
    synth_imu,
)
from .trajectory import KINDS, TrajectorySpec, TruthSample, path_length, sample_truth

__all__ = [
    "CameraModel", "CsvParseError", "KINDS", "Scenario", "ScenarioConfig", "TrackFrames",
    "TrackGenerator", "TrackTable", "TrajectorySpec", "TruthSample", "generate_landmarks",
    "ingest_imu_csv", "ingest_tracks_csv", "ingest_truth_csv", "noiseless", "observe",
    "path_length", "project_landmarks", "sample_truth", "simulate", "synth_imu",
    "write_imu_csv", "write_scenario", "write_tracks_csv", "write_truth_csv",
]
