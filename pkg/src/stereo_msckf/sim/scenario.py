"""Synthetic IMU and stereo-track generation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry import quat_multiply, quat_to_rotation, rotation_to_quat
from ..propagation import ImuSample
from ..state import NoiseParams, StereoExtrinsics
from .trajectory import TrajectorySpec, TruthSample, sample_truth

NS = 1_000_000_000

# Forward-looking camera on a FLU body: optical axis along body x,
# image x to body -y, image y to body -z.
FORWARD_CAMERA_Q_IC = rotation_to_quat(np.array([
    [0.0, 0.0, 1.0],
    [-1.0, 0.0, 0.0],
    [0.0, -1.0, 0.0],
]))


@dataclass
class CameraModel:
    focal: float = 480.0
    fov: float = np.deg2rad(90.0)
    min_depth: float = 1.0
    max_depth: float = 30.0

    @property
    def half_width(self) -> float:
        return float(np.tan(0.5 * self.fov))


def noiseless() -> NoiseParams:
    return NoiseParams(0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass
class ScenarioConfig:
    trajectory: TrajectorySpec = field(default_factory=TrajectorySpec)
    imu_rate: int = 200
    cam_rate: int = 20
    landmark_density: float = 0.03
    landmark_margin: float = 15.0
    landmark_vertical_extent: float = 8.0
    max_landmarks: int = 20000
    camera: CameraModel = field(default_factory=CameraModel)
    extrinsics: StereoExtrinsics = field(default_factory=StereoExtrinsics)
    q_IC: np.ndarray = field(default_factory=lambda: FORWARD_CAMERA_Q_IC.copy())
    p_IC: np.ndarray = field(default_factory=lambda: np.array([0.1, 0.05, 0.0]))
    noise: NoiseParams = field(default_factory=NoiseParams)
    initial_gyro_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    initial_accel_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    max_track_length: int = 30
    # Runway tracks shorten above this speed to mimic fast-flight feature loss.
    track_speed_reference: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.imu_rate % self.cam_rate != 0:
            raise ValueError("imu_rate must be an integer multiple of cam_rate")
        self.q_IC = np.asarray(self.q_IC, dtype=float)
        self.p_IC = np.asarray(self.p_IC, dtype=float)

    @property
    def duration(self) -> float:
        return self.trajectory.total_duration

    def imu_times_ns(self) -> np.ndarray:
        step = NS // self.imu_rate
        n = int(np.floor(self.duration * self.imu_rate + 1e-9))
        return np.arange(n + 1, dtype=np.int64) * step

    def cam_times_ns(self) -> np.ndarray:
        return self.imu_times_ns()[:: self.imu_rate // self.cam_rate]


@dataclass
class TrackTable:
    """Stereo feature frames plus the ground truth that produced them."""

    frames: list  # (timestamp_ns, {feature_id: 4-vector})
    landmarks: np.ndarray
    feature_landmark: dict
    truth: list  # TruthSample at IMU rate

    def frame_times(self) -> np.ndarray:
        return np.array([t for t, _ in self.frames], dtype=np.int64)


@dataclass
class Scenario:
    config: ScenarioConfig
    imu: list
    gyro_bias: np.ndarray
    accel_bias: np.ndarray
    tracks: TrackTable


def synth_imu(spec: TrajectorySpec, noise: NoiseParams, seed: int, rate: int = 200,
              initial_gyro_bias=None, initial_accel_bias=None):
    """IMU samples on a ``rate`` Hz grid and the true bias traces."""
    cfg = ScenarioConfig(trajectory=spec, imu_rate=rate, cam_rate=rate, noise=noise, seed=seed)
    return _synth_imu(cfg, initial_gyro_bias, initial_accel_bias)


def _synth_imu(cfg: ScenarioConfig, b_g0=None, b_a0=None):
    noise = cfg.noise
    times = cfg.imu_times_ns()
    dt = 1.0 / cfg.imu_rate
    rng = np.random.default_rng([cfg.seed, 1])
    n = len(times)
    white_g = rng.standard_normal((n, 3)) * (noise.sigma_g / np.sqrt(dt))
    white_a = rng.standard_normal((n, 3)) * (noise.sigma_a / np.sqrt(dt))
    walk_g = rng.standard_normal((n, 3)) * (noise.sigma_wg * np.sqrt(dt))
    walk_a = rng.standard_normal((n, 3)) * (noise.sigma_wa * np.sqrt(dt))
    walk_g[0] = 0.0
    walk_a[0] = 0.0
    b_g = np.cumsum(walk_g, axis=0) + (np.zeros(3) if b_g0 is None else np.asarray(b_g0))
    b_a = np.cumsum(walk_a, axis=0) + (np.zeros(3) if b_a0 is None else np.asarray(b_a0))

    samples, truth = [], []
    for k, t_ns in enumerate(times):
        tr = sample_truth(cfg.trajectory, t_ns / NS, noise.gravity)
        truth.append(tr)
        samples.append(ImuSample(
            t_ns / NS,
            tr.omega_body + b_g[k] + white_g[k],
            tr.specific_force + b_a[k] + white_a[k],
        ))
    return samples, b_g, b_a, truth


def generate_landmarks(cfg: ScenarioConfig) -> np.ndarray:
    """Uniform landmarks in a box around the trajectory."""
    ts = np.linspace(0.0, cfg.duration, 200)
    ps = np.array([sample_truth(cfg.trajectory, t).p for t in ts])
    lo = ps.min(axis=0) - cfg.landmark_margin
    hi = ps.max(axis=0) + cfg.landmark_margin
    lo[2] = ps[:, 2].min() - 0.5 * cfg.landmark_vertical_extent
    hi[2] = ps[:, 2].max() + 0.5 * cfg.landmark_vertical_extent
    volume = float(np.prod(hi - lo))
    n = int(min(cfg.max_landmarks, max(1, round(cfg.landmark_density * volume))))
    rng = np.random.default_rng([cfg.seed, 2])
    return lo + rng.random((n, 3)) * (hi - lo)


def camera_pose(truth: TruthSample, q_IC, p_IC):
    """World pose (q_CG, p_GC) of the left camera."""
    q_CI = np.array([-q_IC[0], -q_IC[1], -q_IC[2], q_IC[3]])
    q_CG = quat_multiply(q_CI, truth.q_IG)
    p_GC = truth.p + quat_to_rotation(truth.q_IG).T @ p_IC
    return q_CG, p_GC


def project_landmarks(landmarks, q_CG, p_GC, ext: StereoExtrinsics, camera: CameraModel):
    """Noiseless stereo measurements and a visibility mask (both cameras)."""
    C = quat_to_rotation(q_CG)
    p1 = (landmarks - p_GC) @ C.T
    p2 = (p1 - ext.p_C1C2) @ ext.R_C2C1.T
    hw = camera.half_width
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.hstack([p1[:, :2] / p1[:, 2:3], p2[:, :2] / p2[:, 2:3]])
    visible = np.ones(len(landmarks), dtype=bool)
    for p in (p1, p2):
        visible &= (p[:, 2] >= camera.min_depth) & (p[:, 2] <= camera.max_depth)
    visible &= np.all(np.abs(z) <= hw, axis=1)
    return z, visible


def track_length_cap(cfg: ScenarioConfig, speed: float) -> int:
    cap = cfg.max_track_length
    if cfg.trajectory.kind == "runway-out-and-back" and speed > cfg.track_speed_reference:
        cap = max(3, int(cap * cfg.track_speed_reference / speed))
    return cap


class TrackGenerator:
    """Assigns stable feature ids to visible landmarks frame after frame.

    A track ends when its landmark leaves the view or reaches the lifetime
    cap; the landmark is then re-detected under a fresh id.
    """

    def __init__(self, cfg: ScenarioConfig, landmarks: np.ndarray):
        self.cfg = cfg
        self.landmarks = landmarks
        self.current_id = np.full(len(landmarks), -1, dtype=np.int64)
        self.length = np.zeros(len(landmarks), dtype=np.int64)
        self.next_id = 0
        self.feature_landmark: dict[int, int] = {}

    def observe(self, truth: TruthSample, frame_index: int) -> dict:
        cfg = self.cfg
        q_CG, p_GC = camera_pose(truth, cfg.q_IC, cfg.p_IC)
        z, visible = project_landmarks(self.landmarks, q_CG, p_GC, cfg.extrinsics, cfg.camera)
        cap = track_length_cap(cfg, float(np.linalg.norm(truth.v)))
        ended = ~visible | (self.length >= cap)
        self.current_id[ended] = -1
        self.length[ended] = 0
        idx = np.flatnonzero(visible)
        rng = np.random.default_rng([cfg.seed, 3, frame_index])
        noise = rng.standard_normal((len(idx), 4)) * cfg.noise.sigma_im
        frame = {}
        for k, j in enumerate(idx):
            if self.current_id[j] < 0:
                self.current_id[j] = self.next_id
                self.feature_landmark[self.next_id] = int(j)
                self.next_id += 1
            self.length[j] += 1
            frame[int(self.current_id[j])] = z[j] + noise[k]
        return frame


def simulate(cfg: ScenarioConfig) -> Scenario:
    """Generate IMU data and stereo tracks for a scenario (deterministic in ``seed``)."""
    samples, b_g, b_a, truth = _synth_imu(cfg, cfg.initial_gyro_bias, cfg.initial_accel_bias)
    landmarks = generate_landmarks(cfg)
    gen = TrackGenerator(cfg, landmarks)
    stride = cfg.imu_rate // cfg.cam_rate
    frames = []
    for i, k in enumerate(range(0, len(truth), stride)):
        t_ns = int(cfg.imu_times_ns()[k])
        frames.append((t_ns, gen.observe(truth[k], i)))
    table = TrackTable(frames, landmarks, gen.feature_landmark, truth)
    return Scenario(cfg, samples, b_g, b_a, table)


def observe(landmarks, cfg: ScenarioConfig, truth: TruthSample, frame_index: int) -> dict:
    """Single stereo frame without track bookkeeping; keys are landmark indices."""
    q_CG, p_GC = camera_pose(truth, cfg.q_IC, cfg.p_IC)
    z, visible = project_landmarks(np.asarray(landmarks, dtype=float), q_CG, p_GC,
                                   cfg.extrinsics, cfg.camera)
    idx = np.flatnonzero(visible)
    rng = np.random.default_rng([cfg.seed, 3, frame_index])
    noise = rng.standard_normal((len(idx), 4)) * cfg.noise.sigma_im
    return {int(j): z[j] + noise[k] for k, j in enumerate(idx)}
