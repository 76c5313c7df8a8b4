"""Experiment configuration files (INI-style ``key = value`` sections).

Every key has a default; unknown sections or keys are errors. Example::

    [trajectory]
    kind = circle
    amplitude = 5
    speed = 1.5
    duration = 30

    [noise]
    sigma_im = 0.00208

    [filter]
    observability_constraint = true
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..options import FilterConfig
from ..sim.scenario import CameraModel, ScenarioConfig
from ..sim.trajectory import TrajectorySpec
from ..state import NoiseParams, PriorCovariance, StereoExtrinsics


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _vec(n):
    def parse(text: str) -> np.ndarray:
        vals = [float(x) for x in text.replace(",", " ").split()]
        if len(vals) != n:
            raise ValueError(f"expected {n} numbers, got {len(vals)}")
        return np.array(vals)
    return parse


def _optional_float(text: str):
    return None if text.strip().lower() in ("", "none", "auto") else float(text)


# section -> key -> (parser, default, help)
SCHEMA = {
    "scenario": {
        "seed": (int, 0, "RNG seed (IMU noise, landmarks, image noise)"),
        "imu_rate": (int, 200, "IMU rate in Hz"),
        "cam_rate": (int, 20, "stereo frame rate in Hz; must divide imu_rate"),
        "runs": (int, 10, "Monte-Carlo runs (seeds seed .. seed+runs-1)"),
    },
    "trajectory": {
        "kind": (str, "hover", "hover | straight-accel | circle | figure-eight | runway-out-and-back"),
        "amplitude": (float, 5.0, "radius / half width / one-way runway distance (m)"),
        "speed": (float, 1.0, "peak speed (m/s)"),
        "duration": (_optional_float, 10.0, "seconds; 'auto' uses the full runway profile"),
        "yaw_follows_velocity": (_bool, False, "heading tracks the velocity direction"),
        "height": (float, 1.5, "flight height (m)"),
        "initial_yaw": (float, 0.0, "heading when not following velocity (rad)"),
        "wobble_amplitude": (float, 0.0, "roll/pitch excitation amplitude (rad)"),
        "wobble_frequency": (float, 0.2, "roll/pitch excitation frequency (Hz)"),
    },
    "noise": {
        "sigma_g": (float, 1e-3, "gyro white noise density"),
        "sigma_wg": (float, 1e-5, "gyro bias random walk density"),
        "sigma_a": (float, 1e-2, "accelerometer white noise density"),
        "sigma_wa": (float, 1e-4, "accelerometer bias random walk density"),
        "sigma_im": (float, 1.0 / 480.0, "normalized image noise std"),
        "gravity": (_vec(3), np.array([0.0, 0.0, -9.81]), "gravity vector in the world frame"),
    },
    "frontend": {
        "landmark_density": (float, 0.03, "landmarks per cubic metre"),
        "landmark_margin": (float, 15.0, "horizontal padding of the landmark box (m)"),
        "landmark_vertical_extent": (float, 8.0, "height of the landmark box (m)"),
        "max_landmarks": (int, 20000, "upper bound on landmark count"),
        "focal": (float, 480.0, "focal length in pixels (informational)"),
        "fov": (float, float(np.deg2rad(90.0)), "field of view (rad)"),
        "min_depth": (float, 1.0, "minimum visible depth (m)"),
        "max_depth": (float, 30.0, "maximum visible depth (m)"),
        "baseline": (float, 0.2, "stereo baseline (m)"),
        "max_track_length": (int, 30, "feature lifetime cap in frames"),
        "track_speed_reference": (float, 5.0, "runway speed above which lifetimes shrink (m/s)"),
        "q_IC": (_vec(4), None, "camera-to-IMU rotation quaternion [x y z w]; default forward-looking"),
        "p_IC": (_vec(3), np.array([0.1, 0.05, 0.0]), "camera position in the IMU frame (m)"),
    },
    "filter": {
        "max_cams": (int, 20, "sliding window size"),
        "observability_constraint": (_bool, True, "observability-constrained transition"),
        "h_projection": (_bool, True, "project measurement Jacobians onto the observable subspace"),
        "rotation_threshold": (float, 0.26, "keyframe rotation threshold (rad)"),
        "translation_threshold": (float, 0.4, "keyframe translation threshold (m)"),
        "gate_confidence": (float, 0.95, "chi-square gate quantile"),
        "min_track_length": (int, 2, "minimum observations for an update"),
        "prior_orientation": (float, 1e-4, "initial orientation variance (rad^2)"),
        "prior_gyro_bias": (float, 1e-2, "initial gyro bias variance"),
        "prior_velocity": (float, 0.25, "initial velocity variance"),
        "prior_accel_bias": (float, 1e-1, "initial accelerometer bias variance"),
        "prior_position": (float, 0.0, "initial position variance"),
        "prior_extrinsic_rotation": (float, 1e-8, "initial extrinsic rotation variance"),
        "prior_extrinsic_translation": (float, 1e-8, "initial extrinsic translation variance"),
    },
    "input": {
        "imu": (str, "", "IMU CSV for the run command (empty: simulate)"),
        "tracks": (str, "", "track CSV"),
        "truth": (str, "", "optional ground-truth CSV"),
    },
}


@dataclass
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    filter: FilterConfig = field(default_factory=FilterConfig)
    prior: PriorCovariance = field(default_factory=PriorCovariance)
    runs: int = 10
    inputs: dict = field(default_factory=dict)


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Read a config file (or only defaults when ``path`` is None).

    ``overrides`` maps ``"section.key"`` to already-parsed values.
    """
    values = {sec: {k: spec[1] for k, spec in keys.items()} for sec, keys in SCHEMA.items()}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        parser.optionxform = str
        try:
            parser.read(p)
        except configparser.Error as exc:
            raise ConfigError(f"{p}: {exc}") from None
        for sec in parser.sections():
            if sec not in SCHEMA:
                raise ConfigError(f"{p}: unknown section [{sec}]")
            for key, text in parser.items(sec):
                if key not in SCHEMA[sec]:
                    raise ConfigError(f"{p}: unknown key {key!r} in [{sec}]")
                try:
                    values[sec][key] = SCHEMA[sec][key][0](text)
                except ValueError as exc:
                    raise ConfigError(f"{p}: [{sec}] {key}: {exc}") from None
    for dotted, v in (overrides or {}).items():
        sec, key = dotted.split(".", 1)
        values[sec][key] = v
    try:
        return _build(values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or '<defaults>'}: {exc}") from None


def _build(v: dict) -> ExperimentConfig:
    sc, tr, nz, fe, fl = v["scenario"], v["trajectory"], v["noise"], v["frontend"], v["filter"]
    traj = TrajectorySpec(**tr)
    noise = NoiseParams(**nz)
    camera = CameraModel(fe["focal"], fe["fov"], fe["min_depth"], fe["max_depth"])
    extra = {} if fe["q_IC"] is None else {"q_IC": fe["q_IC"]}
    scenario = ScenarioConfig(
        trajectory=traj,
        imu_rate=sc["imu_rate"],
        cam_rate=sc["cam_rate"],
        landmark_density=fe["landmark_density"],
        landmark_margin=fe["landmark_margin"],
        landmark_vertical_extent=fe["landmark_vertical_extent"],
        max_landmarks=fe["max_landmarks"],
        camera=camera,
        extrinsics=StereoExtrinsics(p_C1C2=np.array([fe["baseline"], 0.0, 0.0])),
        p_IC=fe["p_IC"],
        noise=noise,
        max_track_length=fe["max_track_length"],
        track_speed_reference=fe["track_speed_reference"],
        seed=sc["seed"],
        **extra,
    )
    filt = FilterConfig(**{k: val for k, val in fl.items() if not k.startswith("prior_")})
    prior = PriorCovariance(**{k[len("prior_"):]: val for k, val in fl.items() if k.startswith("prior_")})
    if sc["runs"] < 1:
        raise ValueError("runs must be positive")
    inputs = {k: val for k, val in v["input"].items() if val}
    return ExperimentConfig(scenario, filt, prior, sc["runs"], inputs)


def describe_schema() -> str:
    """Human-readable list of every section, key and default."""
    lines = []
    for sec, keys in SCHEMA.items():
        lines.append(f"[{sec}]")
        for key, (_, default, text) in keys.items():
            d = " ".join(f"{x:g}" for x in default) if isinstance(default, np.ndarray) else default
            lines.append(f"  {key} = {d}    # {text}")
    return "\n".join(lines)
