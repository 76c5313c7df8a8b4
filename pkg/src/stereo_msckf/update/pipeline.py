"""Feature linearization and the stacked update over a set of tracks."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from ..geometry import skew
from ..propagation import full_unobservable_basis
from ..state import CAM_DIM, IMU_DIM, FilterState, enforce_symmetry
from .ekf import (
    LinearizedFeature,
    chi_square_gate,
    ekf_update,
    observability_project_H,
    qr_compress,
    stack_and_project,
)
from .measurement import FeatureRejected, batch_measurement_model
from .triangulation import triangulate

if TYPE_CHECKING:
    from ..options import FilterConfig


@dataclass
class UpdateDiagnostics:
    timestamp: float
    trigger: str
    features_used: int = 0
    rejected: Counter = field(default_factory=Counter)
    dof: int = 0
    gamma_mean: float = 0.0
    gamma_max: float = 0.0
    max_abs_residual: float = 0.0
    # max over features of ||H_xo N|| / ||H_xo||
    oc_residual: float = 0.0
    yaw_var_before: float = float("nan")
    yaw_var_after: float = float("nan")
    pruned: tuple = ()

    CSV_FIELDS = (
        "timestamp", "trigger", "features_used", "rejected_total", "rejected_by_cause",
        "dof", "gamma_mean", "gamma_max", "max_abs_residual", "oc_residual",
        "yaw_var_before", "yaw_var_after", "pruned",
    )

    def row(self) -> list:
        causes = ";".join(f"{k}={v}" for k, v in sorted(self.rejected.items()))
        return [
            repr(float(self.timestamp)), self.trigger, self.features_used, sum(self.rejected.values()),
            causes, self.dof, repr(self.gamma_mean), repr(self.gamma_max),
            repr(self.max_abs_residual), repr(self.oc_residual),
            repr(self.yaw_var_before), repr(self.yaw_var_after),
            " ".join(str(i) for i in self.pruned),
        ]


def write_diagnostics_csv(path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(UpdateDiagnostics.CSV_FIELDS)
        for rec in records:
            w.writerow(rec.row())


def yaw_variance(state: FilterState, N: np.ndarray | None = None) -> float:
    """Variance of the error along the yaw column of the unobservable basis."""
    n = (full_unobservable_basis(state) if N is None else N)[:, 3]
    return float(n @ state.P @ n)


def linearize_feature(state: FilterState, track, use_cam_ids, config: FilterConfig,
                      N: np.ndarray | None = None):
    """Triangulate a track and build its null-space-projected residual.

    ``use_cam_ids`` selects which observations enter the residual; all of the
    track's observations are used for triangulation. Returns the linearized
    feature and the raw residual; raises FeatureRejected.
    """
    cams = {c.id: c for c in state.cams}
    obs_all = [o for o in track.observations if o.cam_id in cams]
    used = [o for o in obs_all if o.cam_id in use_cam_ids]
    if len(used) < config.min_track_length:
        raise FeatureRejected("too_few_observations", f"{len(used)} usable")
    sigma = state.params.sigma_im
    tri = triangulate(obs_all, cams, state.extrinsics, sigma, config.triangulation)
    if not tri.converged:
        raise FeatureRejected(tri.reason)
    p_G = tri.p_G

    M = len(used)
    z_hat, H_C, H_fk = batch_measurement_model([cams[o.cam_id] for o in used], state.extrinsics,
                                              p_G, config.depth_floor)
    H_x = np.zeros((4 * M, state.dim))
    cols = []
    for k, obs in enumerate(used):
        sl = state.error_index("cam", obs.cam_id)
        H_x[4 * k:4 * k + 4, sl] = H_C[k]
        cols.extend(range(sl.start, sl.stop))
    H_f = H_fk.reshape(4 * M, 3)
    r = (np.array([o.z for o in used]) - z_hat).ravel()

    if config.h_projection:
        if N is None:
            N = full_unobservable_basis(state)
        g = state.params.gravity
        N_f = np.hstack([np.eye(3), (-skew(p_G) @ g)[:, None]])
        H_sub = np.hstack([H_x[:, cols], H_f])
        N_sub = np.vstack([N[cols], N_f])
        H_sub = observability_project_H(H_sub, N_sub)
        H_x[:, cols] = H_sub[:, :-3]
        H_f = H_sub[:, -3:]

    return stack_and_project(H_x, H_f, r)


def remove_cam_states(state: FilterState, cam_ids) -> FilterState:
    """Drop clones and their covariance rows/columns."""
    drop = set(cam_ids)
    keep_idx = list(range(IMU_DIM))
    cams = []
    for i, cam in enumerate(state.cams):
        if cam.id in drop:
            continue
        b = IMU_DIM + CAM_DIM * i
        keep_idx.extend(range(b, b + CAM_DIM))
        cams.append(cam)
    out = state.copy()
    out.cams = [c.copy() for c in cams]
    idx = np.array(keep_idx)
    out.P = enforce_symmetry(state.P[np.ix_(idx, idx)])
    return out


def run_update_step(state: FilterState, tracks, config: FilterConfig, prune_ids=None,
                    trigger: str | None = None):
    """Process a batch of tracks in one stacked EKF update.

    With ``prune_ids`` only the observations made at those clones form the
    residuals, and the clones are removed afterwards. Returns the new state
    and an UpdateDiagnostics record.
    """
    trigger = trigger or ("window" if prune_ids is not None else "feature_lost")
    diag = UpdateDiagnostics(state.imu.timestamp, trigger)
    N = full_unobservable_basis(state)
    diag.yaw_var_before = yaw_variance(state, N)
    all_ids = set(state.cam_ids)
    use_ids = set(prune_ids) if prune_ids is not None else all_ids
    sigma = state.params.sigma_im

    blocks = []
    gammas = []
    for track in sorted(tracks, key=lambda t: t.feature_id):
        try:
            lin: LinearizedFeature = linearize_feature(state, track, use_ids, config, N)
        except FeatureRejected as exc:
            diag.rejected[exc.cause] += 1
            continue
        ok, gamma = chi_square_gate(lin.H_xo, lin.r_o, state.P, sigma, config.gate_confidence)
        if not ok:
            diag.rejected["chi2_gate"] += 1
            continue
        gammas.append(gamma)
        blocks.append(lin)
        diag.max_abs_residual = max(diag.max_abs_residual, float(np.max(np.abs(lin.r))))
        if config.h_projection:
            rel = np.linalg.norm(lin.H_xo @ N) / max(np.linalg.norm(lin.H_xo), 1e-300)
            diag.oc_residual = max(diag.oc_residual, float(rel))

    if blocks:
        H = np.vstack([b.H_xo for b in blocks])
        r = np.concatenate([b.r_o for b in blocks])
        diag.features_used = len(blocks)
        diag.dof = len(r)
        diag.gamma_mean = float(np.mean(gammas))
        diag.gamma_max = float(np.max(gammas))
        H, r = qr_compress(H, r)
        state = ekf_update(state, H, r, sigma)
    diag.yaw_var_after = yaw_variance(state, N)

    if prune_ids is not None:
        state = remove_cam_states(state, prune_ids)
        diag.pruned = tuple(sorted(prune_ids))
    return state, diag
