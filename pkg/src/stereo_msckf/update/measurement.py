"""Stereo projection model and its Jacobians."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry import skew
from ..state import CamState, StereoExtrinsics

DEPTH_FLOOR = 0.01


class FeatureRejected(Exception):
    """A feature cannot be used in an update; ``cause`` names the reason."""

    def __init__(self, cause: str, detail: str = ""):
        super().__init__(f"{cause}: {detail}" if detail else cause)
        self.cause = cause


@dataclass(frozen=True)
class StereoObservation:
    cam_id: int
    z: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        if z.shape != (4,) or not np.all(np.isfinite(z)):
            raise ValueError(f"bad stereo observation {self.z!r}")
        object.__setattr__(self, "z", z)


@dataclass
class FeatureTrack:
    feature_id: int
    observations: list = field(default_factory=list)

    def add(self, obs: StereoObservation):
        if self.observations and obs.cam_id <= self.observations[-1].cam_id:
            raise ValueError(f"feature {self.feature_id}: camera ids must increase")
        self.observations.append(obs)

    @property
    def cam_ids(self) -> list:
        return [o.cam_id for o in self.observations]

    def __len__(self):
        return len(self.observations)


def transform_feature(p_G, cam: CamState, ext: StereoExtrinsics):
    """Feature position in the left and right camera frames."""
    p_C1 = cam.rotation @ (np.asarray(p_G) - cam.p_GC)
    p_C2 = ext.R_C2C1 @ (p_C1 - ext.p_C1C2)
    return p_C1, p_C2


def predict_measurement(p_C1, p_C2, depth_floor: float = DEPTH_FLOOR) -> np.ndarray:
    if p_C1[2] <= depth_floor or p_C2[2] <= depth_floor:
        raise FeatureRejected("behind_camera", f"depths {p_C1[2]:.3g}, {p_C2[2]:.3g}")
    return np.array([
        p_C1[0] / p_C1[2], p_C1[1] / p_C1[2],
        p_C2[0] / p_C2[2], p_C2[1] / p_C2[2],
    ])


def projection_jacobians(p_C1, p_C2):
    """``dz/dp_C1`` and ``dz/dp_C2``, each 4x3."""
    X1, Y1, Z1 = p_C1
    X2, Y2, Z2 = p_C2
    dz1 = np.zeros((4, 3))
    dz1[0] = [1.0 / Z1, 0.0, -X1 / Z1**2]
    dz1[1] = [0.0, 1.0 / Z1, -Y1 / Z1**2]
    dz2 = np.zeros((4, 3))
    dz2[2] = [1.0 / Z2, 0.0, -X2 / Z2**2]
    dz2[3] = [0.0, 1.0 / Z2, -Y2 / Z2**2]
    return dz1, dz2


def measurement_jacobians(cam: CamState, ext: StereoExtrinsics, p_G):
    """``H_C`` (4x6, w.r.t. the clone's ``(theta, p)``) and ``H_f`` (4x3)."""
    C = cam.rotation
    p_C1, p_C2 = transform_feature(p_G, cam, ext)
    dz1, dz2 = projection_jacobians(p_C1, p_C2)
    R21 = ext.R_C2C1
    dp1_dx = np.hstack([skew(p_C1), -C])
    dp1_df = C
    H_C = dz1 @ dp1_dx + dz2 @ R21 @ dp1_dx
    H_f = dz1 @ dp1_df + dz2 @ R21 @ dp1_df
    return H_C, H_f


def batch_measurement_model(cams, ext: StereoExtrinsics, p_G, depth_floor: float = DEPTH_FLOOR):
    """Predictions and Jacobians for one feature seen by several clones.

    Returns ``z_hat`` (M, 4), ``H_C`` (M, 4, 6) and ``H_f`` (M, 4, 3); raises
    FeatureRejected if the feature is behind any of the cameras.
    """
    C = np.array([c.rotation for c in cams])
    d = np.asarray(p_G) - np.array([c.p_GC for c in cams])
    p1 = np.einsum("mij,mj->mi", C, d)
    R21 = ext.R_C2C1
    p2 = (p1 - ext.p_C1C2) @ R21.T
    if np.any(p1[:, 2] <= depth_floor) or np.any(p2[:, 2] <= depth_floor):
        raise FeatureRejected("behind_camera", f"min depth {min(p1[:, 2].min(), p2[:, 2].min()):.3g}")
    M = len(cams)
    z_hat = np.hstack([p1[:, :2] / p1[:, 2:3], p2[:, :2] / p2[:, 2:3]])

    def proj(p):
        inv = 1.0 / p[:, 2]
        J = np.zeros((M, 2, 3))
        J[:, 0, 0] = inv
        J[:, 1, 1] = inv
        J[:, 0, 2] = -p[:, 0] * inv * inv
        J[:, 1, 2] = -p[:, 1] * inv * inv
        return J

    # dz/dp_C1 for both image points
    dz = np.concatenate([proj(p1), proj(p2) @ R21], axis=1)
    sk = np.zeros((M, 3, 3))
    sk[:, 0, 1], sk[:, 0, 2] = -p1[:, 2], p1[:, 1]
    sk[:, 1, 0], sk[:, 1, 2] = p1[:, 2], -p1[:, 0]
    sk[:, 2, 0], sk[:, 2, 1] = -p1[:, 1], p1[:, 0]
    H_f = dz @ C
    H_C = np.concatenate([dz @ sk, -H_f], axis=2)
    return z_hat, H_C, H_f
