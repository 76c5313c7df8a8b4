"""Nominal state, sliding camera window and joint error-state covariance.

Error-state layout (21 + 6N)::

    0:3   theta      IMU orientation error (q_IG)
    3:6   b_g        gyro bias
    6:9   v          velocity in G
    9:12  b_a        accelerometer bias
    12:15 p          IMU position in G
    15:18 theta_IC   camera/IMU extrinsic rotation error
    18:21 p_IC       camera position in the IMU frame
    21+6i ...        (theta_C, p_C) of the i-th camera in window order
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    IDENTITY_QUAT,
    normalize_quat,
    quat_inverse,
    quat_multiply,
    quat_to_rotation,
    rotation_to_quat,
    small_angle_quat,
)

IMU_DIM = 21
CAM_DIM = 6

_IMU_SLICES = {
    "theta": slice(0, 3),
    "b_g": slice(3, 6),
    "v": slice(6, 9),
    "b_a": slice(9, 12),
    "p": slice(12, 15),
    "theta_IC": slice(15, 18),
    "p_IC": slice(18, 21),
}
_CAM_SLICES = {"cam_theta": (0, 3), "cam_p": (3, 6)}


def error_dim(n_cams: int) -> int:
    return IMU_DIM + CAM_DIM * n_cams


@dataclass
class NoiseParams:
    """Continuous-time IMU noise densities and image noise.

    ``sigma_g`` [rad/s/sqrt(Hz)], ``sigma_wg`` [rad/s^2/sqrt(Hz)],
    ``sigma_a`` [m/s^2/sqrt(Hz)], ``sigma_wa`` [m/s^3/sqrt(Hz)];
    ``sigma_im`` is the per-axis std of a normalized image coordinate.
    """

    sigma_g: float = 1e-3
    sigma_wg: float = 1e-5
    sigma_a: float = 1e-2
    sigma_wa: float = 1e-4
    sigma_im: float = 1.0 / 480.0
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))

    def __post_init__(self):
        self.gravity = np.asarray(self.gravity, dtype=float)
        for name in ("sigma_g", "sigma_wg", "sigma_a", "sigma_wa", "sigma_im"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value >= 0.0):
                raise ValueError(f"{name} must be finite and non-negative, got {value}")

    def continuous_q(self) -> np.ndarray:
        """12x12 covariance of ``(n_g, n_wg, n_a, n_wa)``."""
        d = np.repeat([self.sigma_g, self.sigma_wg, self.sigma_a, self.sigma_wa], 3) ** 2
        return np.diag(d)

    @property
    def is_noiseless(self) -> bool:
        return not any((self.sigma_g, self.sigma_wg, self.sigma_a, self.sigma_wa, self.sigma_im))


@dataclass
class StereoExtrinsics:
    """Fixed left-to-right camera transform.

    ``q_C2C1`` rotates left-camera coordinates into the right camera frame;
    ``p_C1C2`` is the right camera centre expressed in the left frame.
    """

    q_C2C1: np.ndarray = field(default_factory=lambda: IDENTITY_QUAT.copy())
    p_C1C2: np.ndarray = field(default_factory=lambda: np.array([0.2, 0.0, 0.0]))

    def __post_init__(self):
        self.q_C2C1 = normalize_quat(self.q_C2C1)
        self.p_C1C2 = np.asarray(self.p_C1C2, dtype=float)

    def __setattr__(self, name, value):
        super().__setattr__(name, value)
        if name == "q_C2C1":
            super().__setattr__("_R", None)

    @property
    def R_C2C1(self) -> np.ndarray:
        if self._R is None:
            self._R = quat_to_rotation(self.q_C2C1)
        return self._R

    @property
    def baseline(self) -> float:
        return float(np.linalg.norm(self.p_C1C2))


@dataclass
class ImuState:
    q_IG: np.ndarray = field(default_factory=lambda: IDENTITY_QUAT.copy())
    b_g: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v_GI: np.ndarray = field(default_factory=lambda: np.zeros(3))
    b_a: np.ndarray = field(default_factory=lambda: np.zeros(3))
    p_GI: np.ndarray = field(default_factory=lambda: np.zeros(3))
    # ^I_C q: C(q_IC) maps camera coordinates into the IMU frame.
    q_IC: np.ndarray = field(default_factory=lambda: IDENTITY_QUAT.copy())
    p_IC: np.ndarray = field(default_factory=lambda: np.zeros(3))
    timestamp: float = 0.0

    def __post_init__(self):
        self.q_IG = normalize_quat(self.q_IG)
        self.q_IC = normalize_quat(self.q_IC)
        for name in ("b_g", "v_GI", "b_a", "p_GI", "p_IC"):
            setattr(self, name, np.array(getattr(self, name), dtype=float))

    @property
    def q_CI(self) -> np.ndarray:
        return quat_inverse(self.q_IC)

    def copy(self) -> "ImuState":
        return dataclasses.replace(self)


@dataclass
class CamState:
    id: int
    q_CG: np.ndarray
    p_GC: np.ndarray
    timestamp: float
    # Pose at which the observability basis of this clone is evaluated.
    q_CG_null: np.ndarray = None
    p_GC_null: np.ndarray = None

    def __post_init__(self):
        self.q_CG = normalize_quat(self.q_CG)
        self.p_GC = np.array(self.p_GC, dtype=float)
        if self.q_CG_null is None:
            self.q_CG_null = self.q_CG.copy()
        if self.p_GC_null is None:
            self.p_GC_null = self.p_GC.copy()

    def __setattr__(self, name, value):
        super().__setattr__(name, value)
        if name == "q_CG":
            super().__setattr__("_R", None)

    @property
    def rotation(self) -> np.ndarray:
        """``C(q_CG)``, cached until the orientation is reassigned."""
        if self._R is None:
            self._R = quat_to_rotation(self.q_CG)
        return self._R

    def copy(self) -> "CamState":
        return dataclasses.replace(self)


@dataclass
class PriorCovariance:
    orientation: float = 1e-4
    gyro_bias: float = 1e-2
    velocity: float = 0.25
    accel_bias: float = 1e-1
    position: float = 0.0
    extrinsic_rotation: float = 1e-8
    extrinsic_translation: float = 1e-8

    def matrix(self) -> np.ndarray:
        d = np.repeat([
            self.orientation, self.gyro_bias, self.velocity, self.accel_bias,
            self.position, self.extrinsic_rotation, self.extrinsic_translation,
        ], 3)
        return np.diag(d)


@dataclass
class FilterState:
    imu: ImuState
    cams: list
    P: np.ndarray
    extrinsics: StereoExtrinsics
    params: NoiseParams
    # IMU state at which the observability basis was last evaluated.
    imu_null: ImuState = None
    next_cam_id: int = 0

    def __post_init__(self):
        if self.imu_null is None:
            self.imu_null = self.imu.copy()
        if self.P.shape != (self.dim, self.dim):
            raise ValueError(f"covariance is {self.P.shape}, expected {self.dim}x{self.dim}")

    @property
    def dim(self) -> int:
        return error_dim(len(self.cams))

    @property
    def cam_ids(self) -> list:
        return [c.id for c in self.cams]

    def cam_position(self, cam_id: int) -> int:
        for i, c in enumerate(self.cams):
            if c.id == cam_id:
                return i
        raise KeyError(f"no camera state with id {cam_id}")

    def cam(self, cam_id: int) -> CamState:
        return self.cams[self.cam_position(cam_id)]

    def error_index(self, component: str, cam_id: int | None = None) -> slice:
        """Slice of ``component`` in the error state.

        IMU components: ``theta, b_g, v, b_a, p, theta_IC, p_IC``.
        Camera components (need ``cam_id``): ``cam_theta, cam_p, cam``.
        """
        if component in _IMU_SLICES:
            return _IMU_SLICES[component]
        if component in ("cam", "cam_theta", "cam_p"):
            if cam_id is None:
                raise KeyError(f"{component} requires a camera id")
            base = IMU_DIM + CAM_DIM * self.cam_position(cam_id)
            if component == "cam":
                return slice(base, base + CAM_DIM)
            a, b = _CAM_SLICES[component]
            return slice(base + a, base + b)
        raise KeyError(f"unknown error-state component {component!r}")

    def copy(self) -> "FilterState":
        return FilterState(
            imu=self.imu.copy(),
            cams=[c.copy() for c in self.cams],
            P=self.P.copy(),
            extrinsics=self.extrinsics,
            params=self.params,
            imu_null=self.imu_null.copy(),
            next_cam_id=self.next_cam_id,
        )

    def snapshot_row(self) -> list:
        """``timestamp, p(3), q(4), v(3), b_g(3), b_a(3)``."""
        s = self.imu
        return [s.timestamp, *s.p_GI, *s.q_IG, *s.v_GI, *s.b_g, *s.b_a]


SNAPSHOT_HEADER = [
    "timestamp", "px", "py", "pz", "qx", "qy", "qz", "qw",
    "vx", "vy", "vz", "bgx", "bgy", "bgz", "bax", "bay", "baz",
]


def enforce_symmetry(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def apply_correction(state: FilterState, dx: np.ndarray) -> FilterState:
    """Inject an error-state estimate into the nominal state.

    Orientations are corrected on the left, ``q <- dq(theta) (x) q``; the
    extrinsic rotation error lives on ``q_CI``. Everything else is additive.
    """
    dx = np.asarray(dx, dtype=float)
    if dx.shape != (state.dim,):
        raise ValueError(f"correction has shape {dx.shape}, expected ({state.dim},)")
    out = state.copy()
    imu = out.imu
    imu.q_IG = quat_multiply(small_angle_quat(dx[0:3]), imu.q_IG)
    imu.b_g = imu.b_g + dx[3:6]
    imu.v_GI = imu.v_GI + dx[6:9]
    imu.b_a = imu.b_a + dx[9:12]
    imu.p_GI = imu.p_GI + dx[12:15]
    q_CI = quat_multiply(small_angle_quat(dx[15:18]), imu.q_CI)
    imu.q_IC = quat_inverse(q_CI)
    imu.p_IC = imu.p_IC + dx[18:21]
    for i, cam in enumerate(out.cams):
        base = IMU_DIM + CAM_DIM * i
        cam.q_CG = quat_multiply(small_angle_quat(dx[base:base + 3]), cam.q_CG)
        cam.p_GC = cam.p_GC + dx[base + 3:base + 6]
    return out


def state_difference(true: ImuState, est: ImuState) -> np.ndarray:
    """21-dim error ``true - est`` under the same conventions as the correction."""
    from .geometry import quat_to_rotvec

    d = np.zeros(IMU_DIM)
    d[0:3] = quat_to_rotvec(quat_multiply(true.q_IG, quat_inverse(est.q_IG)))
    d[3:6] = true.b_g - est.b_g
    d[6:9] = true.v_GI - est.v_GI
    d[9:12] = true.b_a - est.b_a
    d[12:15] = true.p_GI - est.p_GI
    d[15:18] = quat_to_rotvec(quat_multiply(true.q_CI, quat_inverse(est.q_CI)))
    d[18:21] = true.p_IC - est.p_IC
    return d


def initial_state(
    imu: ImuState,
    extrinsics: StereoExtrinsics | None = None,
    params: NoiseParams | None = None,
    prior: PriorCovariance | None = None,
) -> FilterState:
    """Filter with an empty window and a block-diagonal prior."""
    prior = prior or PriorCovariance()
    return FilterState(
        imu=imu.copy(),
        cams=[],
        P=prior.matrix(),
        extrinsics=extrinsics or StereoExtrinsics(),
        params=params or NoiseParams(),
    )


def static_initialization(samples, gravity: np.ndarray, template: ImuState | None = None) -> ImuState:
    """Bootstrap attitude (roll/pitch) and gyro bias from stationary IMU data.

    ``samples`` is a sequence of ImuSample; velocity starts at zero, yaw is
    left at zero and position at the template's value.
    """
    if len(samples) == 0:
        raise ValueError("static initialization needs at least one IMU sample")
    w = np.mean([s.omega_m for s in samples], axis=0)
    a = np.mean([s.accel_m for s in samples], axis=0)
    up_body = a / np.linalg.norm(a)
    up_world = -np.asarray(gravity, dtype=float) / np.linalg.norm(gravity)
    # Smallest rotation taking up_world onto up_body gives C(q_IG).
    c = float(np.dot(up_world, up_body))
    axis = np.cross(up_world, up_body)
    s = np.linalg.norm(axis)
    if s < 1e-12:
        C = np.eye(3) if c > 0 else np.diag([1.0, -1.0, -1.0])
    else:
        k = axis / s
        K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
        ang = np.arctan2(s, c)
        C = np.eye(3) + np.sin(ang) * K + (1 - np.cos(ang)) * K @ K
    out = (template or ImuState()).copy()
    out.q_IG = rotation_to_quat(C)
    out.b_g = w
    out.v_GI = np.zeros(3)
    out.timestamp = samples[-1].timestamp
    return out
