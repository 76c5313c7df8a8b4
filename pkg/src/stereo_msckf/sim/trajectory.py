"""Analytic platform trajectories with closed-form derivatives."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ..geometry import rotation_to_quat

KINDS = ("hover", "straight-accel", "circle", "figure-eight", "runway-out-and-back")


@dataclass
class TrajectorySpec:
    """Platform motion.

    ``amplitude`` is the circle radius, the figure-eight half width or the
    one-way runway distance (m); ``speed`` is the peak speed (m/s). The runway
    profile lasts ``pi * amplitude / speed`` seconds unless ``duration`` is
    shorter. Optional roll/pitch wobble adds rotational excitation.
    """

    kind: str = "hover"
    amplitude: float = 5.0
    speed: float = 1.0
    duration: float | None = 10.0
    yaw_follows_velocity: bool = False
    height: float = 1.5
    initial_yaw: float = 0.0
    wobble_amplitude: float = 0.0
    wobble_frequency: float = 0.2

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown trajectory kind {self.kind!r}; expected one of {KINDS}")
        if self.kind != "hover" and not self.speed > 0:
            raise ValueError("speed must be positive")
        if self.kind in ("circle", "figure-eight", "runway-out-and-back") and not self.amplitude > 0:
            raise ValueError("amplitude must be positive")
        if self.duration is None and self.kind != "runway-out-and-back":
            raise ValueError(f"{self.kind} trajectory needs a duration")

    @property
    def runway_period(self) -> float:
        return np.pi * self.amplitude / self.speed

    @property
    def total_duration(self) -> float:
        if self.kind == "runway-out-and-back":
            if self.duration is None:
                return self.runway_period
            return min(self.duration, self.runway_period)
        return float(self.duration)


class TruthSample(NamedTuple):
    t: float
    q_IG: np.ndarray
    p: np.ndarray
    v: np.ndarray
    a_world: np.ndarray
    omega_body: np.ndarray
    specific_force: np.ndarray


def _translation(spec: TrajectorySpec, t: float):
    h = spec.height
    z3 = np.zeros(3)
    if spec.kind == "hover":
        return np.array([0.0, 0.0, h]), z3, z3
    if spec.kind == "straight-accel":
        acc = spec.speed / spec.total_duration
        return np.array([0.5 * acc * t * t, 0.0, h]), np.array([acc * t, 0.0, 0.0]), np.array([acc, 0.0, 0.0])
    if spec.kind == "circle":
        R, s = spec.amplitude, spec.speed
        w = s / R
        c, sn = np.cos(w * t), np.sin(w * t)
        return (np.array([R * c, R * sn, h]), np.array([-s * sn, s * c, 0.0]),
                np.array([-s * w * c, -s * w * sn, 0.0]))
    if spec.kind == "figure-eight":
        A = spec.amplitude
        w = spec.speed / (A * np.sqrt(2.0))
        return (
            np.array([A * np.sin(w * t), 0.5 * A * np.sin(2 * w * t), h]),
            np.array([A * w * np.cos(w * t), A * w * np.cos(2 * w * t), 0.0]),
            np.array([-A * w * w * np.sin(w * t), -2 * A * w * w * np.sin(2 * w * t), 0.0]),
        )
    # runway-out-and-back
    A = spec.amplitude
    k = 2.0 * np.pi / spec.runway_period
    return (
        np.array([0.5 * A * (1.0 - np.cos(k * t)), 0.0, h]),
        np.array([0.5 * A * k * np.sin(k * t), 0.0, 0.0]),
        np.array([0.5 * A * k * k * np.cos(k * t), 0.0, 0.0]),
    )


def _euler(spec: TrajectorySpec, t: float, v, a):
    """ZYX angles (yaw, pitch, roll) and their rates."""
    if spec.yaw_follows_velocity and spec.kind in ("circle", "figure-eight"):
        yaw = np.arctan2(v[1], v[0])
        yaw_rate = (v[0] * a[1] - v[1] * a[0]) / (v[0] ** 2 + v[1] ** 2)
    else:
        yaw, yaw_rate = spec.initial_yaw, 0.0
    W, f = spec.wobble_amplitude, 2.0 * np.pi * spec.wobble_frequency
    roll, roll_rate = W * np.sin(f * t), W * f * np.cos(f * t)
    f2 = 0.7 * f
    pitch, pitch_rate = W * np.sin(f2 * t + 1.0) - W * np.sin(1.0), W * f2 * np.cos(f2 * t + 1.0)
    return (yaw, pitch, roll), (yaw_rate, pitch_rate, roll_rate)


def body_to_world(yaw, pitch, roll) -> np.ndarray:
    cy, sy = np.cos(yaw), np.sin(yaw)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cr, sr = np.cos(roll), np.sin(roll)
    Rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    Ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    Rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    return Rz @ Ry @ Rx


def sample_truth(spec: TrajectorySpec, t: float, gravity=(0.0, 0.0, -9.81)) -> TruthSample:
    """Pose, velocity, acceleration, body rate and specific force at ``t``."""
    T = spec.total_duration
    if not (0.0 <= t <= T + 1e-9):
        raise ValueError(f"t={t} outside [0, {T}]")
    p, v, a = _translation(spec, t)
    (yaw, pitch, roll), (dyaw, dpitch, droll) = _euler(spec, t, v, a)
    R = body_to_world(yaw, pitch, roll)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cr, sr = np.cos(roll), np.sin(roll)
    omega = np.array([
        droll - dyaw * sp,
        dpitch * cr + dyaw * sr * cp,
        -dpitch * sr + dyaw * cr * cp,
    ])
    C = R.T
    f = C @ (a - np.asarray(gravity, dtype=float))
    return TruthSample(t, rotation_to_quat(C), p, v, a, omega, f)


def path_length(spec: TrajectorySpec, dt: float = 0.01) -> float:
    ts = np.arange(0.0, spec.total_duration, dt)
    return float(sum(np.linalg.norm(_translation(spec, t)[1]) for t in ts) * dt)
