"""CSV readers and writers for IMU streams, stereo tracks and ground truth.

Timestamps are integer nanoseconds on disk and seconds in memory.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..propagation import ImuSample

IMU_HEADER = ["timestamp_ns", "wx", "wy", "wz", "ax", "ay", "az"]
TRACK_HEADER = ["timestamp_ns", "feature_id", "u1", "v1", "u2", "v2"]
TRUTH_HEADER = ["timestamp_ns", "px", "py", "pz", "qx", "qy", "qz", "qw", "vx", "vy", "vz"]

NS = 1_000_000_000


class CsvParseError(ValueError):
    """Malformed input row; ``line`` is 1-based."""

    def __init__(self, path, line: int, message: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


def to_ns(t: float) -> int:
    return int(round(t * NS))


def _rows(path, arity: int):
    """Yield (line_number, fields) skipping blank lines and a header row."""
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not f.strip() for f in row):
                continue
            if lineno == 1 and row[0].strip().lstrip("#").strip() == "timestamp_ns":
                continue
            if len(row) != arity:
                raise CsvParseError(path, lineno, f"expected {arity} fields, got {len(row)}")
            yield lineno, [f.strip() for f in row]


def _int(path, lineno, text):
    try:
        return int(text)
    except ValueError:
        raise CsvParseError(path, lineno, f"not an integer: {text!r}") from None


def _floats(path, lineno, fields):
    try:
        vals = [float(f) for f in fields]
    except ValueError as exc:
        raise CsvParseError(path, lineno, str(exc)) from None
    if not all(np.isfinite(vals)):
        raise CsvParseError(path, lineno, "non-finite value")
    return vals


def write_imu_csv(path, samples) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(IMU_HEADER)
        for s in samples:
            w.writerow([to_ns(s.timestamp), *map(repr, map(float, s.omega_m)),
                        *map(repr, map(float, s.accel_m))])


def ingest_imu_csv(path) -> list:
    """Read an IMU stream; timestamps must strictly increase."""
    out, last = [], None
    for lineno, f in _rows(path, len(IMU_HEADER)):
        t = _int(path, lineno, f[0])
        if last is not None and t <= last:
            raise CsvParseError(path, lineno, f"timestamp {t} not after {last}")
        last = t
        v = _floats(path, lineno, f[1:])
        out.append(ImuSample(t / NS, v[0:3], v[3:6]))
    return out


@dataclass
class TrackFrames:
    """Stereo frames read from disk: ``frames`` is a list of (timestamp_ns, {id: z})."""

    frames: list

    def frame_times(self) -> np.ndarray:
        return np.array([t for t, _ in self.frames], dtype=np.int64)


def write_tracks_csv(path, frames) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACK_HEADER)
        for t_ns, obs in frames:
            for fid in sorted(obs):
                w.writerow([int(t_ns), int(fid), *map(repr, map(float, obs[fid]))])


def ingest_tracks_csv(path) -> TrackFrames:
    """Read stereo tracks grouped by timestamp.

    Rows for one timestamp must be contiguous and timestamps must not
    decrease; a feature may appear only once per frame.
    """
    frames: list = []
    for lineno, f in _rows(path, len(TRACK_HEADER)):
        t = _int(path, lineno, f[0])
        fid = _int(path, lineno, f[1])
        z = np.array(_floats(path, lineno, f[2:]))
        if frames and t < frames[-1][0]:
            raise CsvParseError(path, lineno, f"timestamp {t} before {frames[-1][0]}")
        if not frames or t != frames[-1][0]:
            frames.append((t, {}))
        obs = frames[-1][1]
        if fid in obs:
            raise CsvParseError(path, lineno, f"feature {fid} repeated at {t}")
        obs[fid] = z
    return TrackFrames(frames)


def write_truth_csv(path, truth) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRUTH_HEADER)
        for s in truth:
            w.writerow([to_ns(s.t), *map(repr, map(float, s.p)), *map(repr, map(float, s.q_IG)),
                        *map(repr, map(float, s.v))])


def ingest_truth_csv(path) -> np.ndarray:
    """Ground truth as an (n, 11) array with the timestamp in seconds in column 0."""
    rows, last = [], None
    for lineno, f in _rows(path, len(TRUTH_HEADER)):
        t = _int(path, lineno, f[0])
        if last is not None and t <= last:
            raise CsvParseError(path, lineno, f"timestamp {t} not after {last}")
        last = t
        rows.append([t / NS, *_floats(path, lineno, f[1:])])
    return np.array(rows, dtype=float).reshape(-1, len(TRUTH_HEADER))


def write_scenario(out_dir, scenario) -> dict:
    """Write imu.csv, tracks.csv and truth.csv; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"imu": out / "imu.csv", "tracks": out / "tracks.csv", "truth": out / "truth.csv"}
    write_imu_csv(paths["imu"], scenario.imu)
    write_tracks_csv(paths["tracks"], scenario.tracks.frames)
    write_truth_csv(paths["truth"], scenario.tracks.truth)
    return paths
