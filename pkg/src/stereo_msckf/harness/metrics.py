"""Trajectory alignment and error metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class AlignmentTransform:
    """Rigid yaw + translation applied as ``p -> Rz(yaw) @ p + translation``;
    ``time_offset`` is added to estimate timestamps."""

    yaw: float = 0.0
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    time_offset: float = 0.0

    @property
    def rotation(self) -> np.ndarray:
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])

    def apply(self, positions) -> np.ndarray:
        return np.asarray(positions, dtype=float) @ self.rotation.T + self.translation


def _speed(times, positions):
    if len(times) < 2:
        return np.zeros(len(times))
    return np.linalg.norm(np.gradient(positions, times, axis=0), axis=1)


def _resample(t_src, values, t_query):
    return np.column_stack([np.interp(t_query, t_src, values[:, j]) for j in range(values.shape[1])])


def estimate_time_offset(t_est, p_est, t_true, p_true, window: float = 0.5, step: float = 0.005) -> float:
    """Offset maximizing the correlation between speed profiles.

    Candidates are multiples of ``step`` in ``[-window, window]``; ties (e.g.
    constant speed) resolve to the smallest magnitude offset.
    """
    v_est = _speed(t_est, p_est)
    v_true = _speed(t_true, p_true)
    n = int(round(window / step))
    offsets = np.arange(-n, n + 1) * step
    offsets = offsets[np.argsort(np.abs(offsets), kind="stable")]
    best, best_score = 0.0, -np.inf
    for dt in offsets:
        t = t_est + dt
        mask = (t >= t_true[0]) & (t <= t_true[-1])
        if mask.sum() < 2:
            continue
        a = v_est[mask]
        b = np.interp(t[mask], t_true, v_true)
        a = a - a.mean()
        b = b - b.mean()
        denom = np.sqrt((a @ a) * (b @ b))
        score = (a @ b) / denom if denom > 1e-12 else 0.0
        if score > best_score + 1e-12:
            best, best_score = float(dt), score
    return best


def align_yaw_position(t_est, p_est, t_true, p_true, time_window: float = 0.5,
                       time_step: float = 0.005) -> AlignmentTransform:
    """Least-squares yaw and translation mapping the estimate onto the truth.

    The time offset is found first by speed-profile correlation; the truth
    is then resampled at the shifted estimate timestamps.
    """
    t_est = np.asarray(t_est, dtype=float)
    t_true = np.asarray(t_true, dtype=float)
    p_est = np.asarray(p_est, dtype=float)
    p_true = np.asarray(p_true, dtype=float)
    if len(t_est) < 2 or len(t_true) < 2:
        raise AlignmentError("alignment needs at least two samples in each trajectory")
    dt = estimate_time_offset(t_est, p_est, t_true, p_true, time_window, time_step) if time_window > 0 else 0.0
    t = t_est + dt
    mask = (t >= t_true[0] - 1e-12) & (t <= t_true[-1] + 1e-12)
    if mask.sum() < 2:
        raise AlignmentError("trajectories overlap in fewer than two samples")
    e = p_est[mask]
    g = _resample(t_true, p_true, t[mask])
    ce, cg = e.mean(axis=0), g.mean(axis=0)
    de, dg = e - ce, g - cg
    num = np.sum(de[:, 0] * dg[:, 1] - de[:, 1] * dg[:, 0])
    den = np.sum(de[:, 0] * dg[:, 0] + de[:, 1] * dg[:, 1])
    yaw = float(np.arctan2(num, den)) if abs(num) + abs(den) > 1e-15 else 0.0
    tf = AlignmentTransform(yaw, np.zeros(3), dt)
    return AlignmentTransform(yaw, cg - tf.rotation @ ce, dt)


@dataclass
class RunReport:
    seed: int
    rmse_xy: float
    rmse_xyz: float
    final_drift: float
    drift_fraction: float
    mean_nees: float
    yaw_var_final: float
    nees: np.ndarray = field(default_factory=lambda: np.zeros(0))
    yaw_var: np.ndarray = field(default_factory=lambda: np.zeros(0))
    path_length: float = 0.0
    stage_seconds: dict = field(default_factory=dict)
    diagnostics: list = field(default_factory=list)

    CSV_FIELDS = ("seed", "rmse_xy", "rmse_xyz", "final_drift", "drift_fraction", "mean_nees", "yaw_var_final")

    def row(self) -> list:
        return [self.seed] + [repr(float(getattr(self, k))) for k in self.CSV_FIELDS[1:]]


def nees(errors, covariances) -> np.ndarray:
    """``e^T P^-1 e`` per sample; singular covariances use the pseudo-inverse."""
    out = np.empty(len(errors))
    for k, (e, P) in enumerate(zip(errors, covariances)):
        try:
            out[k] = e @ np.linalg.solve(P, e)
        except np.linalg.LinAlgError:
            out[k] = e @ np.linalg.pinv(P) @ e
    return out


def nees_bounds(dof: int, n_runs: int, confidence: float = 0.95):
    """Two-sided bounds on the average NEES of ``n_runs`` independent runs."""
    a = 0.5 * (1.0 - confidence)
    return (stats.chi2.ppf(a, dof * n_runs) / n_runs, stats.chi2.ppf(1.0 - a, dof * n_runs) / n_runs)


def trajectory_length(positions) -> float:
    p = np.asarray(positions, dtype=float)
    return float(np.sum(np.linalg.norm(np.diff(p, axis=0), axis=1))) if len(p) > 1 else 0.0


def compute_metrics(est_positions, true_positions, errors9=None, P9=None, path_length=None,
                    seed: int = 0, yaw_var=None) -> RunReport:
    """Error metrics of an aligned estimate against truth sampled at the same times."""
    e = np.asarray(est_positions, dtype=float) - np.asarray(true_positions, dtype=float)
    if len(e) == 0:
        raise ValueError("no samples to evaluate")
    length = trajectory_length(true_positions) if path_length is None else float(path_length)
    final = float(np.linalg.norm(e[-1]))
    n = nees(errors9, P9) if errors9 is not None and len(errors9) else np.zeros(0)
    yv = np.asarray(yaw_var if yaw_var is not None else [], dtype=float)
    return RunReport(
        seed=seed,
        rmse_xy=float(np.sqrt(np.mean(np.sum(e[:, :2] ** 2, axis=1)))),
        rmse_xyz=float(np.sqrt(np.mean(np.sum(e ** 2, axis=1)))),
        final_drift=final,
        drift_fraction=final / length if length > 0 else float("nan"),
        mean_nees=float(np.mean(n)) if len(n) else float("nan"),
        yaw_var_final=float(yv[-1]) if len(yv) else float("nan"),
        nees=n,
        yaw_var=yv,
        path_length=length,
    )
