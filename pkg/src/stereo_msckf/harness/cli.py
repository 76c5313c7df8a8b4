"""Command-line entry point: ``stereo-msckf {simulate,run,montecarlo,selftest}``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from ..sim.io import CsvParseError, ingest_imu_csv, ingest_tracks_csv, ingest_truth_csv, write_scenario
from ..sim.scenario import simulate
from .config import ConfigError, describe_schema, load_config
from .runner import monte_carlo, run_recorded, run_simulated, write_report_csv, write_run_outputs
from .selftest import run_all

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_SELFTEST = 0, 1, 2, 3

logger = logging.getLogger("stereo_msckf")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment config file (defaults apply when omitted)")
    common.add_argument("--seed", type=int, help="override [scenario] seed")
    common.add_argument("--out-dir", type=Path, default=Path("out"), help="output directory (default: out)")
    common.add_argument("--disable-oc", action="store_true", help="plain EKF transition (no observability constraint)")
    common.add_argument("--disable-h-projection", action="store_true",
                        help="skip the observability projection of measurement Jacobians")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="stereo-msckf", description="Stereo MSCKF simulation and evaluation harness")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="write synthetic imu/tracks/truth CSVs")
    sub.add_parser("run", parents=[common], help="filter one scenario or recorded data set")
    mc = sub.add_parser("montecarlo", parents=[common], help="multi-seed consistency study")
    mc.add_argument("--runs", type=int, help="number of seeds (overrides [scenario] runs)")
    mc.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    mc.add_argument("--compare-oc", action="store_true", help="also run every seed with OC toggled")
    st = sub.add_parser("selftest", parents=[common], help="Jacobian and null-space consistency checks")
    st.add_argument("--trials", type=int, default=100)
    sub.add_parser("config-keys", help="list every config key with its default")
    return p


def _load(args):
    overrides = {}
    if args.seed is not None:
        overrides["scenario.seed"] = args.seed
    exp = load_config(args.config, overrides)
    if args.disable_oc:
        # A plain EKF: neither the transition nor the Jacobians are constrained.
        exp.filter = dataclasses.replace(exp.filter, observability_constraint=False, h_projection=False)
    if args.disable_h_projection:
        exp.filter = dataclasses.replace(exp.filter, h_projection=False)
    return exp


def _print_report(r) -> None:
    print(f"seed={r.seed} rmse_xy={r.rmse_xy:.4f} m rmse_xyz={r.rmse_xyz:.4f} m "
          f"final_drift={r.final_drift:.4f} m drift_fraction={100 * r.drift_fraction:.3f}% "
          f"mean_nees={r.mean_nees:.2f} yaw_var_final={r.yaw_var_final:.3e}")


def cmd_simulate(args) -> int:
    exp = _load(args)
    scenario = simulate(exp.scenario)
    paths = write_scenario(args.out_dir, scenario)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return EXIT_OK


def cmd_run(args) -> int:
    exp = _load(args)
    if exp.inputs:
        if "imu" not in exp.inputs or "tracks" not in exp.inputs:
            raise ConfigError("[input] needs both imu and tracks")
        imu = ingest_imu_csv(exp.inputs["imu"])
        frames = ingest_tracks_csv(exp.inputs["tracks"]).frames
        truth = ingest_truth_csv(exp.inputs["truth"]) if "truth" in exp.inputs else None
        report, trace = run_recorded(imu, frames, truth, exp.scenario, exp.filter, exp.prior)
        write_run_outputs(args.out_dir, report, trace)
    else:
        report, trace, scenario = run_simulated(exp.scenario, exp.filter, exp.prior)
        write_run_outputs(args.out_dir, report, trace, scenario.tracks.truth)
    if report is not None:
        _print_report(report)
    secs = ", ".join(f"{k}={v:.2f}s" for k, v in sorted(trace.stage_seconds.items()))
    print(f"wall clock: {secs}")
    print(f"outputs in {args.out_dir}")
    return EXIT_OK


def cmd_montecarlo(args) -> int:
    exp = _load(args)
    runs = args.runs if args.runs is not None else exp.runs
    if runs < 2:
        raise ConfigError(f"montecarlo needs at least 2 runs, got {runs}")
    mc = monte_carlo(exp.scenario, runs, exp.filter, exp.prior, args.workers, args.compare_oc)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_report_csv(args.out_dir / "report.csv", mc.reports)
    for r in mc.reports:
        _print_report(r)
    lo, hi = mc.nees_bounds
    print(f"OC {'enabled' if mc.oc_enabled else 'disabled'}; mean drift_fraction "
          f"{100 * mc.mean_drift_fraction:.3f}%")
    print(f"average NEES within 95% bounds [{lo:.2f}, {hi:.2f}] upper side for "
          f"{100 * mc.fraction_within_bounds:.1f}% of frames")
    if mc.yaw_var_final_other:
        other = np.array([mc.yaw_var_final_other[r.seed] for r in mc.reports])
        own = np.array([r.yaw_var_final for r in mc.reports])
        print(f"terminal yaw variance, median: this setting {np.median(own):.3e}, "
              f"toggled OC {np.median(other):.3e}")
    return EXIT_OK


def cmd_selftest(args) -> int:
    results = run_all(args.trials)
    for r in results:
        print(r)
    return EXIT_OK if all(r.passed for r in results) else EXIT_SELFTEST


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; 2 is reserved for runtime failures here
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "config-keys":
        print(describe_schema())
        return EXIT_OK
    handlers = {"simulate": cmd_simulate, "run": cmd_run, "montecarlo": cmd_montecarlo,
                "selftest": cmd_selftest}
    try:
        return handlers[args.command](args)
    except (ConfigError, CsvParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - report any runtime failure as exit code 2
        logger.debug("runtime failure", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
