"""Linear-algebra core of the measurement update."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg
from scipy.stats import chi2

from ..state import FilterState, apply_correction, enforce_symmetry
from .measurement import FeatureRejected

logger = logging.getLogger(__name__)

CHI2_TABLE_MAX_DOF = 400


@dataclass
class LinearizedFeature:
    H_x: np.ndarray
    H_f: np.ndarray
    r: np.ndarray
    H_xo: np.ndarray
    r_o: np.ndarray


@lru_cache(maxsize=None)
def chi2_table(confidence: float = 0.95) -> np.ndarray:
    """``table[d]`` is the ``confidence`` quantile for ``d`` degrees of freedom."""
    return np.r_[0.0, chi2.ppf(confidence, np.arange(1, CHI2_TABLE_MAX_DOF + 1))]


def chi2_threshold(dof: int, confidence: float = 0.95) -> float:
    if dof <= CHI2_TABLE_MAX_DOF:
        return float(chi2_table(confidence)[dof])
    return float(chi2.ppf(confidence, dof))


def left_null_space(H_f: np.ndarray, rank_tol: float = 1e-9):
    """Orthonormal basis of the left null space of ``H_f`` and its rank."""
    Q, R = np.linalg.qr(H_f, mode="complete")
    d = np.abs(np.diag(R))
    rank = int(np.sum(d > rank_tol * max(d.max(initial=0.0), 1e-300)))
    return Q[:, rank:], rank


def stack_and_project(H_x, H_f, r, min_relative_norm: float = 1e-9) -> LinearizedFeature:
    """Remove the feature error from a stacked residual (``V^T r``).

    Raises FeatureRejected when ``H_f`` is rank deficient or when the projected
    Jacobian carries no information, as for a single stereo observation.
    """
    V, rank = left_null_space(H_f)
    if rank < 3:
        raise FeatureRejected("rank_deficient", f"rank(H_f) = {rank}")
    H_xo = V.T @ H_x
    r_o = V.T @ r
    if np.linalg.norm(H_xo) <= min_relative_norm * np.linalg.norm(H_x):
        raise FeatureRejected("uninformative", "projected Jacobian vanishes")
    return LinearizedFeature(H_x, H_f, r, H_xo, r_o)


def chi_square_gate(H_xo, r_o, P, sigma_im: float, confidence: float = 0.95):
    """Mahalanobis test of a projected residual; returns ``(accept, gamma)``."""
    S = H_xo @ P @ H_xo.T + sigma_im**2 * np.eye(len(r_o))
    try:
        gamma = float(r_o @ scipy.linalg.cho_solve(scipy.linalg.cho_factor(S), r_o))
    except (np.linalg.LinAlgError, ValueError):
        logger.warning("singular innovation covariance in gating; feature rejected")
        return False, np.inf
    return gamma <= chi2_threshold(len(r_o), confidence), gamma


def qr_compress(H, r):
    """Replace a tall system by its triangular factor, ``H = Q1 T``."""
    rows, cols = H.shape
    if rows <= cols:
        return H, r
    Q1, T = np.linalg.qr(H, mode="reduced")
    return T, Q1.T @ r


def kalman_gain(P, H, sigma):
    S = H @ P @ H.T + sigma**2 * np.eye(H.shape[0])
    PHt = P @ H.T
    return scipy.linalg.cho_solve(scipy.linalg.cho_factor(S), PHt.T).T


def ekf_update(state: FilterState, H, r, sigma_im: float) -> FilterState:
    """Standard EKF update with Joseph-form covariance."""
    if H.shape[1] != state.dim:
        raise ValueError(f"H has {H.shape[1]} columns, state has {state.dim}")
    if H.shape[0] == 0:
        return state
    P = state.P
    try:
        K = kalman_gain(P, H, sigma_im)
    except (np.linalg.LinAlgError, ValueError):
        logger.warning("innovation covariance not invertible; update skipped")
        return state
    out = apply_correction(state, K @ r)
    IKH = np.eye(state.dim) - K @ H
    out.P = enforce_symmetry(IKH @ P @ IKH.T + sigma_im**2 * K @ K.T)
    return out


def observability_project_H(H, N):
    """Smallest change to ``H`` making ``H @ N == 0``."""
    HN = H @ N
    return H - HN @ np.linalg.solve(N.T @ N, N.T)
