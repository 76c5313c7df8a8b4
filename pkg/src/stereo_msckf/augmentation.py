"""Cloning the current camera pose into the sliding window."""

from __future__ import annotations

import numpy as np

from .geometry import quat_multiply, quat_to_rotation, skew
from .state import CAM_DIM, IMU_DIM, CamState, FilterState, ImuState, enforce_symmetry, error_dim


class WindowOverflowError(RuntimeError):
    pass


def camera_pose_from_imu(imu: ImuState):
    """Left-camera pose ``(q_CG, p_GC)`` implied by the IMU pose and extrinsics."""
    q_CG = quat_multiply(imu.q_CI, imu.q_IG)
    p_GC = imu.p_GI + quat_to_rotation(imu.q_IG).T @ imu.p_IC
    return q_CG, p_GC


def augmentation_jacobian(imu: ImuState, n_cams: int) -> np.ndarray:
    """Jacobian of the new camera error w.r.t. the current error state, 6x(21+6N)."""
    C_IG = quat_to_rotation(imu.q_IG)
    J = np.zeros((CAM_DIM, error_dim(n_cams)))
    J[0:3, 0:3] = quat_to_rotation(imu.q_CI)
    J[0:3, 15:18] = np.eye(3)
    J[3:6, 0:3] = -C_IG.T @ skew(imu.p_IC)
    J[3:6, 12:15] = np.eye(3)
    J[3:6, 18:21] = C_IG.T
    return J


def augment(state: FilterState, timestamp: float | None = None, max_cams: int | None = None) -> FilterState:
    """Append the current camera pose and grow the covariance by 6."""
    n = len(state.cams)
    if max_cams is not None and n >= max_cams:
        raise WindowOverflowError(f"window already holds {n} >= {max_cams} camera states")
    t = state.imu.timestamp if timestamp is None else timestamp
    if state.cams and t <= state.cams[-1].timestamp:
        raise ValueError(f"camera timestamp {t} not after {state.cams[-1].timestamp}")

    q_CG, p_GC = camera_pose_from_imu(state.imu)
    q_null, p_null = camera_pose_from_imu(state.imu_null)
    J_I = augmentation_jacobian(state.imu, 0)

    P = state.P
    JP = J_I @ P[:IMU_DIM, :]
    dim = P.shape[0]
    P_new = np.empty((dim + CAM_DIM, dim + CAM_DIM))
    P_new[:dim, :dim] = P
    P_new[dim:, :dim] = JP
    P_new[:dim, dim:] = JP.T
    P_new[dim:, dim:] = JP[:, :IMU_DIM] @ J_I.T

    out = state.copy()
    out.cams.append(CamState(out.next_cam_id, q_CG, p_GC, t, q_null, p_null))
    out.next_cam_id += 1
    out.P = enforce_symmetry(P_new)
    return out
