"""Feeding scenarios or recorded streams through the filter."""

from __future__ import annotations

import csv
import dataclasses
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..filter import Msckf
from ..options import FilterConfig
from ..sim.io import to_ns, write_truth_csv
from ..sim.scenario import NS, Scenario, ScenarioConfig, simulate
from ..state import (
    SNAPSHOT_HEADER,
    ImuState,
    NoiseParams,
    PriorCovariance,
    initial_state,
    state_difference,
    static_initialization,
)
from ..update.pipeline import write_diagnostics_csv, yaw_variance
from .metrics import RunReport, align_yaw_position, compute_metrics, nees_bounds, trajectory_length

logger = logging.getLogger(__name__)

# (theta, v, p) block of the IMU error state
POSE_VEL_IDX = np.r_[0:3, 6:9, 12:15]


@dataclass
class RunTrace:
    """Per-frame filter output."""

    times: np.ndarray
    positions: np.ndarray
    quaternions: np.ndarray
    velocities: np.ndarray
    rows: list
    P9: list
    errors9: list
    yaw_var: np.ndarray
    window_sizes: list
    diagnostics: list
    stage_seconds: dict = field(default_factory=dict)


def truth_imu_state(cfg: ScenarioConfig, scenario: Scenario, k: int = 0) -> ImuState:
    """True IMU state at IMU sample ``k``."""
    tr = scenario.tracks.truth[k]
    return ImuState(
        q_IG=tr.q_IG, b_g=scenario.gyro_bias[k], v_GI=tr.v, b_a=scenario.accel_bias[k],
        p_GI=tr.p, q_IC=cfg.q_IC, p_IC=cfg.p_IC, timestamp=tr.t,
    )


def filter_noise_for(sim_noise: NoiseParams) -> NoiseParams:
    """Noise model handed to the filter; zero densities get a small floor."""
    floors = NoiseParams()
    vals = {}
    for name in ("sigma_g", "sigma_wg", "sigma_a", "sigma_wa", "sigma_im"):
        v = getattr(sim_noise, name)
        vals[name] = v if v > 0 else 1e-3 * getattr(floors, name)
    return NoiseParams(**vals, gravity=sim_noise.gravity)


def run_filter(imu_samples, frames, filt: Msckf, truth_states=None) -> RunTrace:
    """Run ``filt`` over IMU samples and (timestamp_ns, {id: z}) frames.

    ``truth_states`` optionally maps frame index to the true ImuState for
    error/NEES bookkeeping.
    """
    t_prop = t_upd = 0.0
    i = 0
    n_imu = len(imu_samples)
    times, rows, P9, errs, yv, win = [], [], [], [], [], []
    for f_idx, (t_ns, obs) in enumerate(frames):
        t = t_ns / NS
        if t < filt.state.imu.timestamp:
            continue
        tic = time.perf_counter()
        # Buffer through the first sample past t so the straddling step can be split.
        while i < n_imu and (i == 0 or imu_samples[i - 1].timestamp <= t):
            filt.add_imu(imu_samples[i])
            i += 1
        filt.propagate_to(t)
        t_prop += time.perf_counter() - tic
        tic = time.perf_counter()
        state = filt.process_frame(t, obs)
        t_upd += time.perf_counter() - tic

        times.append(t)
        rows.append(state.snapshot_row())
        P9.append(state.P[np.ix_(POSE_VEL_IDX, POSE_VEL_IDX)].copy())
        yv.append(yaw_variance(state))
        win.append(len(state.cams))
        if truth_states is not None:
            errs.append(state_difference(truth_states(f_idx), state.imu)[POSE_VEL_IDX])
    rows_arr = np.array(rows) if rows else np.zeros((0, 17))
    return RunTrace(
        times=np.array(times),
        positions=rows_arr[:, 1:4],
        quaternions=rows_arr[:, 4:8],
        velocities=rows_arr[:, 8:11],
        rows=rows,
        P9=P9,
        errors9=errs,
        yaw_var=np.array(yv),
        window_sizes=win,
        diagnostics=filt.diagnostics,
        stage_seconds={"propagation": t_prop, "update": t_upd},
    )


def run_scenario(cfg: ScenarioConfig, config: FilterConfig | None = None,
                 prior: PriorCovariance | None = None, scenario: Scenario | None = None):
    """Simulate ``cfg`` (unless given) and run the filter from the true initial state."""
    tic = time.perf_counter()
    scenario = scenario or simulate(cfg)
    t_sim = time.perf_counter() - tic
    state = initial_state(truth_imu_state(cfg, scenario), cfg.extrinsics,
                          filter_noise_for(cfg.noise), prior)
    filt = Msckf(state, config or FilterConfig())
    stride = cfg.imu_rate // cfg.cam_rate

    def truth_at(f_idx):
        return truth_imu_state(cfg, scenario, f_idx * stride)

    trace = run_filter(scenario.imu, scenario.tracks.frames, filt, truth_at)
    trace.stage_seconds["simulation"] = t_sim
    return trace, scenario


def truth_at_frames(scenario: Scenario) -> np.ndarray:
    stride = scenario.config.imu_rate // scenario.config.cam_rate
    return np.array([tr.p for tr in scenario.tracks.truth[::stride]])


def evaluate(trace: RunTrace, t_true, p_true, path_len: float, seed: int,
             time_step: float = 0.005, time_window: float = 0.5) -> RunReport:
    """Align the estimate to the truth and compute the run metrics."""
    tf = align_yaw_position(trace.times, trace.positions, t_true, p_true, time_window, time_step)
    t = trace.times + tf.time_offset
    mask = (t >= t_true[0] - 1e-12) & (t <= t_true[-1] + 1e-12)
    truth = np.column_stack([np.interp(t[mask], t_true, p_true[:, j]) for j in range(3)])
    est = tf.apply(trace.positions[mask])
    errs = [e for e, m in zip(trace.errors9, mask) if m] if trace.errors9 else None
    P9 = [P for P, m in zip(trace.P9, mask) if m]
    report = compute_metrics(est, truth, errs, P9, path_len, seed, trace.yaw_var)
    report.stage_seconds = dict(trace.stage_seconds)
    report.diagnostics = trace.diagnostics
    return report


def run_simulated(cfg: ScenarioConfig, config: FilterConfig | None = None,
                  prior: PriorCovariance | None = None):
    """Simulate, filter and evaluate one seed; returns (report, trace, scenario)."""
    trace, scenario = run_scenario(cfg, config, prior)
    truth = scenario.tracks.truth
    p_all = np.array([tr.p for tr in truth])
    t_all = np.array([tr.t for tr in truth])
    report = evaluate(trace, t_all, p_all, trajectory_length(p_all), cfg.seed, 1.0 / cfg.imu_rate)
    return report, trace, scenario


def run_recorded(imu_samples, frames, truth_rows, cfg: ScenarioConfig,
                 config: FilterConfig | None = None, prior: PriorCovariance | None = None,
                 static_samples: int = 200):
    """Filter recorded streams; ``truth_rows`` is the ground-truth array or None.

    The filter starts from the first truth row when given, otherwise from a
    static initialization over the first ``static_samples`` IMU samples.
    """
    if not imu_samples:
        raise ValueError("IMU stream is empty")
    if truth_rows is not None and len(truth_rows):
        r = truth_rows[0]
        imu0 = ImuState(q_IG=r[4:8], v_GI=r[8:11], p_GI=r[1:4], q_IC=cfg.q_IC,
                        p_IC=cfg.p_IC, timestamp=r[0])
    else:
        still = imu_samples[:static_samples]
        imu0 = static_initialization(still, cfg.noise.gravity,
                                     ImuState(q_IC=cfg.q_IC, p_IC=cfg.p_IC))
    state = initial_state(imu0, cfg.extrinsics, filter_noise_for(cfg.noise), prior)
    filt = Msckf(state, config or FilterConfig())
    samples = [s for s in imu_samples if s.timestamp >= imu0.timestamp]
    trace = run_filter(samples, frames, filt)
    report = None
    if truth_rows is not None and len(truth_rows) >= 2:
        t_true, p_true = truth_rows[:, 0], truth_rows[:, 1:4]
        step = float(np.median(np.diff([s.timestamp for s in samples]))) if len(samples) > 1 else 0.005
        report = evaluate(trace, t_true, p_true, trajectory_length(p_true), cfg.seed, step)
    return report, trace


def write_estimate_csv(path, trace: RunTrace) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp_ns"] + SNAPSHOT_HEADER[1:] + ["yaw_var", "window"])
        for row, yv, n in zip(trace.rows, trace.yaw_var, trace.window_sizes):
            w.writerow([to_ns(row[0])] + [repr(float(x)) for x in row[1:]] + [repr(float(yv)), n])


def write_report_csv(path, reports) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RunReport.CSV_FIELDS)
        for r in sorted(reports, key=lambda r: r.seed):
            w.writerow(r.row())


def write_run_outputs(out_dir, report, trace: RunTrace, truth=None) -> dict:
    """estimate.csv, diagnostics.csv, report.csv and optionally truth.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"estimate": out / "estimate.csv", "diagnostics": out / "diagnostics.csv"}
    write_estimate_csv(paths["estimate"], trace)
    write_diagnostics_csv(paths["diagnostics"], trace.diagnostics)
    if truth is not None:
        paths["truth"] = out / "truth.csv"
        write_truth_csv(paths["truth"], truth)
    if report is not None:
        paths["report"] = out / "report.csv"
        write_report_csv(paths["report"], [report])
    return paths


@dataclass
class MonteCarloReport:
    reports: list
    oc_enabled: bool
    mean_drift_fraction: float
    average_nees: np.ndarray
    nees_bounds: tuple
    fraction_within_bounds: float
    # terminal yaw variance per seed with the opposite OC setting, if run
    yaw_var_final_other: dict = field(default_factory=dict)


def _nanmean(values) -> float:
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    return float(v.mean()) if len(v) else float("nan")


def _one_run(args):
    cfg, config, prior = args
    report, _, _ = run_simulated(cfg, config, prior)
    report.diagnostics = []
    return report


def monte_carlo(cfg: ScenarioConfig, n_runs: int, config: FilterConfig | None = None,
                prior: PriorCovariance | None = None, workers: int = 1,
                compare_oc: bool = False) -> MonteCarloReport:
    """Independent runs with seeds ``cfg.seed .. cfg.seed + n_runs - 1``.

    Results are merged by seed, so the aggregate does not depend on the
    order in which parallel runs finish. With ``compare_oc`` every seed is
    also run with the observability constraint toggled.
    """
    if n_runs < 2:
        raise ValueError("Monte-Carlo needs at least two runs")
    config = config or FilterConfig()
    jobs = [(dataclasses.replace(cfg, seed=cfg.seed + i), config, prior) for i in range(n_runs)]
    if compare_oc:
        flip = not config.observability_constraint
        other = dataclasses.replace(config, observability_constraint=flip, h_projection=flip)
        jobs += [(j[0], other, prior) for j in jobs]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one_run, jobs))
    else:
        results = [_one_run(j) for j in jobs]
    main = sorted(results[:n_runs], key=lambda r: r.seed)
    others = {r.seed: r.yaw_var_final for r in results[n_runs:]}

    n = min(len(r.nees) for r in main)
    avg = np.mean([r.nees[:n] for r in main], axis=0) if n else np.zeros(0)
    lo, hi = nees_bounds(9, n_runs, 0.95)
    within = float(np.mean(avg <= hi)) if n else float("nan")
    return MonteCarloReport(
        reports=main,
        oc_enabled=config.observability_constraint,
        mean_drift_fraction=_nanmean([r.drift_fraction for r in main]),
        average_nees=avg,
        nees_bounds=(lo, hi),
        fraction_within_bounds=within,
        yaw_var_final_other=others,
    )
