"""IMU-driven propagation of the nominal state and the covariance."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .geometry import normalize_quat, omega_matrix, quat_to_rotation, skew
from .state import IMU_DIM, FilterState, ImuState, NoiseParams, enforce_symmetry


@dataclass(frozen=True)
class ImuSample:
    timestamp: float
    omega_m: np.ndarray
    accel_m: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "omega_m", np.asarray(self.omega_m, dtype=float))
        object.__setattr__(self, "accel_m", np.asarray(self.accel_m, dtype=float))
        if not (np.isfinite(self.timestamp) and np.all(np.isfinite(self.omega_m))
                and np.all(np.isfinite(self.accel_m))):
            raise ValueError(f"non-finite IMU sample at t={self.timestamp}")


def interpolate_sample(s0: ImuSample, s1: ImuSample, t: float) -> ImuSample:
    """Linear interpolation between two samples at ``t``."""
    a = (t - s0.timestamp) / (s1.timestamp - s0.timestamp)
    return ImuSample(
        t,
        (1.0 - a) * s0.omega_m + a * s1.omega_m,
        (1.0 - a) * s0.accel_m + a * s1.accel_m,
    )


class StateDerivative(NamedTuple):
    q_IG: np.ndarray
    b_g: np.ndarray
    v_GI: np.ndarray
    b_a: np.ndarray
    p_GI: np.ndarray
    q_IC: np.ndarray
    p_IC: np.ndarray


class TransitionPair(NamedTuple):
    Phi: np.ndarray
    Qk: np.ndarray


def nominal_derivative(imu: ImuState, w_hat, a_hat, gravity) -> StateDerivative:
    """Continuous-time dynamics of the nominal IMU state."""
    C = quat_to_rotation(imu.q_IG)
    z3 = np.zeros(3)
    return StateDerivative(
        q_IG=0.5 * omega_matrix(w_hat) @ imu.q_IG,
        b_g=z3,
        v_GI=C.T @ a_hat + gravity,
        b_a=z3,
        p_GI=imu.v_GI.copy(),
        q_IC=np.zeros(4),
        p_IC=z3,
    )


def _qvp_rate(q, v, w, a, gravity):
    # Unnormalized quaternion inside RK4 stages; C() normalizes on read.
    C = quat_to_rotation(q)
    return 0.5 * omega_matrix(w) @ q, C.T @ a + gravity, v


def rk4_step(imu: ImuState, s0: ImuSample, s1: ImuSample, gravity) -> ImuState:
    """Advance the nominal state from ``s0.timestamp`` to ``s1.timestamp``.

    The bias-corrected rates are linearly interpolated between the samples,
    so the midpoint stages use their average.
    """
    dt = s1.timestamp - s0.timestamp
    if not dt > 0.0:
        raise ValueError(f"non-positive IMU step dt={dt}")
    gravity = np.asarray(gravity, dtype=float)
    w0, w1 = s0.omega_m - imu.b_g, s1.omega_m - imu.b_g
    a0, a1 = s0.accel_m - imu.b_a, s1.accel_m - imu.b_a
    wm, am = 0.5 * (w0 + w1), 0.5 * (a0 + a1)

    q, v, p = imu.q_IG, imu.v_GI, imu.p_GI
    k1 = _qvp_rate(q, v, w0, a0, gravity)
    k2 = _qvp_rate(q + 0.5 * dt * k1[0], v + 0.5 * dt * k1[1], wm, am, gravity)
    k3 = _qvp_rate(q + 0.5 * dt * k2[0], v + 0.5 * dt * k2[1], wm, am, gravity)
    k4 = _qvp_rate(q + dt * k3[0], v + dt * k3[1], w1, a1, gravity)

    out = imu.copy()
    out.q_IG = normalize_quat(q + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]))
    out.v_GI = v + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    out.p_GI = p + dt / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    out.timestamp = s1.timestamp
    return out


def continuous_jacobians(imu: ImuState, w_hat, a_hat):
    """Error-state dynamics ``F`` (21x21) and noise input ``G`` (21x12)."""
    C = quat_to_rotation(imu.q_IG)
    F = np.zeros((IMU_DIM, IMU_DIM))
    F[0:3, 0:3] = -skew(w_hat)
    F[0:3, 3:6] = -np.eye(3)
    F[6:9, 0:3] = -C.T @ skew(a_hat)
    F[6:9, 9:12] = -C.T
    F[12:15, 6:9] = np.eye(3)

    G = np.zeros((IMU_DIM, 12))
    G[0:3, 0:3] = -np.eye(3)
    G[3:6, 3:6] = np.eye(3)
    G[6:9, 6:9] = -C.T
    G[9:12, 9:12] = np.eye(3)
    return F, G


def discretize(F, G, params: NoiseParams, dt: float) -> TransitionPair:
    """Transition matrix (3rd-order series of exp(F dt)) and trapezoidal Q_k."""
    if not dt > 0.0:
        raise ValueError(f"non-positive dt={dt}")
    Fdt = F * dt
    Fdt2 = Fdt @ Fdt
    Phi = np.eye(F.shape[0]) + Fdt + 0.5 * Fdt2 + (Fdt2 @ Fdt) / 6.0
    GQG = G @ params.continuous_q() @ G.T
    Qk = 0.5 * dt * (Phi @ GQG @ Phi.T + GQG)
    return TransitionPair(Phi, enforce_symmetry(Qk))


def unobservable_basis(imu: ImuState, gravity) -> np.ndarray:
    """21x4 basis of global translation (cols 0-2) and yaw (col 3)."""
    g = np.asarray(gravity, dtype=float)
    N = np.zeros((IMU_DIM, 4))
    N[12:15, 0:3] = np.eye(3)
    N[0:3, 3] = quat_to_rotation(imu.q_IG) @ g
    N[6:9, 3] = -skew(imu.v_GI) @ g
    N[12:15, 3] = -skew(imu.p_GI) @ g
    return N


def enforce_observability(Phi, anchor: ImuState, propagated: ImuState, gravity, dt: float):
    """Modify ``Phi`` so that it maps the unobservable basis at ``anchor``
    onto the basis at ``propagated``.

    The orientation block is replaced by the exact relative rotation, then the
    velocity and position rows of the orientation column block receive the
    smallest correction satisfying the yaw constraint.
    """
    g = np.asarray(gravity, dtype=float)
    Phi = Phi.copy()
    C_k = quat_to_rotation(anchor.q_IG)
    C_k1 = quat_to_rotation(propagated.q_IG)
    Phi[0:3, 0:3] = C_k1 @ C_k.T

    u = C_k @ g
    s = u / (u @ u)
    A1 = Phi[6:9, 0:3]
    w1 = skew(anchor.v_GI - propagated.v_GI) @ g
    Phi[6:9, 0:3] = A1 - np.outer(A1 @ u - w1, s)

    A2 = Phi[12:15, 0:3]
    w2 = skew(dt * anchor.v_GI + anchor.p_GI - propagated.p_GI) @ g
    Phi[12:15, 0:3] = A2 - np.outer(A2 @ u - w2, s)
    return Phi


def propagate(state: FilterState, s0: ImuSample, s1: ImuSample, observability_constraint: bool = True) -> FilterState:
    """One IMU step of nominal integration and covariance propagation."""
    dt = s1.timestamp - s0.timestamp
    params = state.params
    imu = state.imu
    w_hat = 0.5 * (s0.omega_m + s1.omega_m) - imu.b_g
    a_hat = 0.5 * (s0.accel_m + s1.accel_m) - imu.b_a
    F, G = continuous_jacobians(imu, w_hat, a_hat)
    Phi, Qk = discretize(F, G, params, dt)

    new_imu = rk4_step(imu, s0, s1, params.gravity)
    if observability_constraint:
        Phi = enforce_observability(Phi, state.imu_null, new_imu, params.gravity, dt)

    out = state.copy()
    out.imu = new_imu
    out.imu_null = new_imu.copy()
    P = out.P
    P[:IMU_DIM, :IMU_DIM] = Phi @ state.P[:IMU_DIM, :IMU_DIM] @ Phi.T + Qk
    if state.cams:
        P_IC = Phi @ state.P[:IMU_DIM, IMU_DIM:]
        P[:IMU_DIM, IMU_DIM:] = P_IC
        P[IMU_DIM:, :IMU_DIM] = P_IC.T
    P[:IMU_DIM, :IMU_DIM] = enforce_symmetry(P[:IMU_DIM, :IMU_DIM])
    return out


def full_unobservable_basis(state: FilterState) -> np.ndarray:
    """(21+6N)x4 unobservable basis at the filter's linearization points.

    IMU rows use the last propagated IMU state; clone rows use each clone's
    pose at the time it was added.
    """
    g = state.params.gravity
    N = np.zeros((state.dim, 4))
    N[:IMU_DIM] = unobservable_basis(state.imu_null, g)
    for i, cam in enumerate(state.cams):
        b = IMU_DIM + 6 * i
        N[b + 3:b + 6, 0:3] = np.eye(3)
        N[b:b + 3, 3] = quat_to_rotation(cam.q_CG_null) @ g
        N[b + 3:b + 6, 3] = -skew(cam.p_GC_null) @ g
    return N
