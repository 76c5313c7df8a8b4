"""Numerical consistency checks of the filter's Jacobians and projections.

Each check compares an analytic matrix with a central finite difference of
the corresponding nonlinear model, evaluated on random states.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..augmentation import augmentation_jacobian, camera_pose_from_imu
from ..geometry import quat_inverse, quat_multiply, quat_to_rotation, quat_to_rotvec, small_angle_quat
from ..propagation import continuous_jacobians
from ..state import IMU_DIM, CamState, ImuState, StereoExtrinsics, apply_correction, initial_state
from ..update.ekf import left_null_space
from ..update.measurement import measurement_jacobians, predict_measurement, transform_feature

FD_STEP = 1e-6


@dataclass
class CheckResult:
    name: str
    trials: int
    worst: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.worst < self.tolerance

    def __str__(self):
        verdict = "ok" if self.passed else "FAILED"
        return f"{self.name:<28} trials={self.trials:<5} worst={self.worst:.2e} tol={self.tolerance:.0e} {verdict}"


def relative_error(numeric: np.ndarray, analytic: np.ndarray) -> float:
    """Largest entry-wise difference relative to the largest analytic entry."""
    scale = max(np.max(np.abs(analytic)), 1e-300)
    return float(np.max(np.abs(numeric - analytic)) / scale)


def random_quat(rng) -> np.ndarray:
    q = rng.standard_normal(4)
    return q / np.linalg.norm(q)


def random_imu_state(rng) -> ImuState:
    return ImuState(
        q_IG=random_quat(rng),
        b_g=0.01 * rng.standard_normal(3),
        v_GI=rng.uniform(-3, 3, 3),
        b_a=0.1 * rng.standard_normal(3),
        p_GI=rng.uniform(-10, 10, 3),
        q_IC=random_quat(rng),
        p_IC=0.2 * rng.standard_normal(3),
    )


def random_stereo_view(rng):
    """A clone, stereo extrinsics and a feature in front of both cameras."""
    cam = CamState(0, random_quat(rng), rng.uniform(-5, 5, 3), 0.0)
    ext = StereoExtrinsics(
        q_C2C1=small_angle_quat(0.05 * rng.standard_normal(3)),
        p_C1C2=np.array([0.2, 0.0, 0.0]) + 0.01 * rng.standard_normal(3),
    )
    p_C1 = np.array([rng.uniform(-1, 1), rng.uniform(-1, 1), 1.0]) * rng.uniform(2.0, 20.0)
    p_G = quat_to_rotation(cam.q_CG).T @ p_C1 + cam.p_GC
    return cam, ext, p_G


def _error_rate(nominal: ImuState, true: ImuState, omega_m, accel_m, gravity, n=None):
    """Time derivative of the error ``true - nominal`` under the IMU dynamics.

    With ``C_dot = -skew(w) C`` the orientation error rate is
    ``w - dC @ w_hat`` (to first order in the error), where ``dC = C C_hat^T``.
    """
    n = np.zeros(12) if n is None else n
    w_hat = omega_m - nominal.b_g
    a_hat = accel_m - nominal.b_a
    w = omega_m - true.b_g - n[0:3]
    a = accel_m - true.b_a - n[6:9]
    C_hat = quat_to_rotation(nominal.q_IG)
    C = quat_to_rotation(true.q_IG)
    d = np.zeros(IMU_DIM)
    d[0:3] = w - (C @ C_hat.T) @ w_hat
    d[3:6] = n[3:6]
    d[6:9] = (C.T @ a + gravity) - (C_hat.T @ a_hat + gravity)
    d[9:12] = n[9:12]
    d[12:15] = true.v_GI - nominal.v_GI
    return d


def _perturbed_imu(imu: ImuState, dx) -> ImuState:
    st = initial_state(imu)
    return apply_correction(st, dx).imu


def check_F(trials: int = 100, seed: int = 0, h: float = FD_STEP) -> CheckResult:
    rng = np.random.default_rng(seed)
    g = np.array([0.0, 0.0, -9.81])
    worst = 0.0
    for _ in range(trials):
        imu = random_imu_state(rng)
        w_m, a_m = rng.standard_normal(3), rng.standard_normal(3) * 5 + np.array([0, 0, 9.81])
        F, _ = continuous_jacobians(imu, w_m - imu.b_g, a_m - imu.b_a)
        num = np.zeros_like(F)
        for j in range(IMU_DIM):
            e = np.zeros(IMU_DIM)
            e[j] = h
            plus = _error_rate(imu, _perturbed_imu(imu, e), w_m, a_m, g)
            minus = _error_rate(imu, _perturbed_imu(imu, -e), w_m, a_m, g)
            num[:, j] = (plus - minus) / (2 * h)
        worst = max(worst, relative_error(num, F))
    return CheckResult("F (error dynamics)", trials, worst, 1e-5)


def check_G(trials: int = 100, seed: int = 1, h: float = FD_STEP) -> CheckResult:
    rng = np.random.default_rng(seed)
    g = np.array([0.0, 0.0, -9.81])
    worst = 0.0
    for _ in range(trials):
        imu = random_imu_state(rng)
        w_m, a_m = rng.standard_normal(3), rng.standard_normal(3) * 5
        _, G = continuous_jacobians(imu, w_m - imu.b_g, a_m - imu.b_a)
        num = np.zeros_like(G)
        for j in range(12):
            e = np.zeros(12)
            e[j] = h
            plus = _error_rate(imu, imu, w_m, a_m, g, e)
            minus = _error_rate(imu, imu, w_m, a_m, g, -e)
            num[:, j] = (plus - minus) / (2 * h)
        worst = max(worst, relative_error(num, G))
    return CheckResult("G (noise input)", trials, worst, 1e-5)


def _pose_error(q_true, p_true, q_est, p_est):
    return np.r_[quat_to_rotvec(quat_multiply(q_true, quat_inverse(q_est))), p_true - p_est]


def check_augmentation(trials: int = 100, seed: int = 2, h: float = FD_STEP) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        imu = random_imu_state(rng)
        J = augmentation_jacobian(imu, 0)
        q0, p0 = camera_pose_from_imu(imu)
        num = np.zeros_like(J)
        for j in range(IMU_DIM):
            e = np.zeros(IMU_DIM)
            e[j] = h
            qp, pp = camera_pose_from_imu(_perturbed_imu(imu, e))
            qm, pm = camera_pose_from_imu(_perturbed_imu(imu, -e))
            num[:, j] = (_pose_error(qp, pp, q0, p0) - _pose_error(qm, pm, q0, p0)) / (2 * h)
        worst = max(worst, relative_error(num, J))
    return CheckResult("J_I (augmentation)", trials, worst, 1e-5)


def _predict(cam, ext, p_G):
    return predict_measurement(*transform_feature(p_G, cam, ext), 0.0)


def check_measurement(trials: int = 100, seed: int = 3, h: float = FD_STEP):
    """Finite-difference checks of ``H_C`` and ``H_f``."""
    rng = np.random.default_rng(seed)
    worst_c = worst_f = 0.0
    for _ in range(trials):
        cam, ext, p_G = random_stereo_view(rng)
        H_C, H_f = measurement_jacobians(cam, ext, p_G)
        num_c = np.zeros((4, 6))
        for j in range(6):
            e = np.zeros(6)
            e[j] = h
            zs = []
            for s in (1.0, -1.0):
                c = cam.copy()
                c.q_CG = quat_multiply(small_angle_quat(s * e[:3]), cam.q_CG)
                c.p_GC = cam.p_GC + s * e[3:]
                zs.append(_predict(c, ext, p_G))
            num_c[:, j] = (zs[0] - zs[1]) / (2 * h)
        num_f = np.zeros((4, 3))
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            num_f[:, j] = (_predict(cam, ext, p_G + e) - _predict(cam, ext, p_G - e)) / (2 * h)
        worst_c = max(worst_c, relative_error(num_c, H_C))
        worst_f = max(worst_f, relative_error(num_f, H_f))
    return (CheckResult("H_C (clone pose)", trials, worst_c, 1e-5),
            CheckResult("H_f (feature position)", trials, worst_f, 1e-5))


def check_single_observation_nullspace(trials: int = 1000, seed: int = 4) -> CheckResult:
    """A lone stereo observation carries no information on the clone pose
    once the feature is eliminated: ``V^T H_C`` vanishes."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        cam, ext, p_G = random_stereo_view(rng)
        H_C, H_f = measurement_jacobians(cam, ext, p_G)
        V, _ = left_null_space(H_f)
        worst = max(worst, float(np.linalg.norm(V.T @ H_C) / np.linalg.norm(H_C)))
    return CheckResult("single-observation V^T H_C", trials, worst, 1e-9)


def run_all(trials: int = 100) -> list:
    return [
        check_F(trials), check_G(trials), check_augmentation(trials),
        *check_measurement(trials), check_single_observation_nullspace(10 * trials),
    ]
