"""Scenario-driven command line: digest, optimize, sortline, pipeline.

Exit codes are a stable scripting contract: 0 success, 2 usage/config error,
1 runtime error. Outputs are plot-ready CSV/JSON under the --out directory;
nothing is written before the whole config validates.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import control, plant, pso
from .config import ConfigError, RunSetup, build_setup, resolve_config
from .segregation.sortline import run_sortline
from .telemetry import RunManifest

USAGE_EXIT = 2
RUNTIME_EXIT = 1


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _write_daily_yield(path: Path, run: plant.ScenarioRun, days: int) -> np.ndarray:
    yields = plant.daily_gas_yields(run.times_min, run.gas_cumulative, days)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("day", "gas_L"))
        for day, gas in enumerate(yields, start=1):
            writer.writerow((day, format(gas, ".17g")))
    return yields


def _write_pressure_trace(path: Path, times_min: np.ndarray, values: np.ndarray) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("t_min", "pressure_kpa"))
        for t, v in zip(times_min, values):
            writer.writerow((format(t, ".17g"), format(v, ".17g")))


def _manifest(setup: RunSetup, run_id: str, t_end_min: float) -> RunManifest:
    return RunManifest(
        run_id=run_id,
        seeds={"master": setup.seed},
        config_digest=setup.digest_hex,
        t_start_min=0.0,
        t_end_min=t_end_min,
    )


# ---------------------------------------------------------------------------
# Commands


def _run_digest(setup: RunSetup, out_dir: Path) -> dict:
    days = setup.digest_days
    run, events = control.run_regulated(
        setup.scenario, setup.gains, setup.envelope,
        setpoint=setup.digest_setpoint,
        stirrer_rpm=setup.digest_actuators.stirrer_rpm,
        duration_days=days, dt_min=setup.digest_dt_min,
        sensors=setup.sensors, params=setup.params,
        vent_open=setup.digest_actuators.vent_open, run_id="digest")
    out_dir.mkdir(parents=True, exist_ok=True)
    run.telemetry.export_csv(out_dir / "telemetry.csv")
    yields = _write_daily_yield(out_dir / "daily_yield.csv", run, int(days))
    control.write_safety_events_csv(events, out_dir / "safety_events.csv")
    _manifest(setup, "digest", days * 1440.0).write(out_dir / "manifest.json")
    summary = {
        "scenario": setup.scenario.name,
        "days": days,
        "total_gas_l": float(run.gas_cumulative[-1]),
        "daily_yield_l": [float(v) for v in yields],
        "peak_day": int(np.argmax(yields)) + 1,
        "safety_events": len(events),
    }
    _write_json(out_dir / "digest_summary.json", summary)
    return summary


def _run_optimize(setup: RunSetup, out_dir: Path) -> dict:
    report = control.run_adaptive_campaign(
        setup.scenario, setup.policy, setup.gains, setup.envelope,
        duration_days=setup.campaign_days, dt_min=setup.campaign_dt_min,
        sensors=setup.sensors, params=setup.params, seed=setup.seed,
        run_id="campaign")
    out_dir.mkdir(parents=True, exist_ok=True)
    report.telemetry.export_csv(out_dir / "telemetry.csv")
    _write_pressure_trace(out_dir / "pressure_trace.csv",
                          report.pressure_times_min, report.pressure_values)
    control.write_safety_events_csv(report.safety_events, out_dir / "safety_events.csv")
    for cycle in report.cycles:
        if cycle.pso_trace:
            result = pso.OptimizationResult(
                best_position=np.array([]), best_value=cycle.pso_best_value,
                iterations_run=len(cycle.pso_trace) - 1,
                convergence_trace=cycle.pso_trace, terminated_by="")
            pso.write_trace_csv(result, out_dir / f"pso_trace_cycle_{cycle.index:03d}.csv")
    payload = report.to_dict()
    _write_json(out_dir / "campaign.json", payload)
    _manifest(setup, "campaign", setup.campaign_days * 1440.0).write(out_dir / "manifest.json")
    return payload


def _run_sortline(setup: RunSetup, out_dir: Path) -> dict:
    report = run_sortline(setup.stream, setup.classifier, setup.threshold,
                          setup.homography, setup.arm, setup.n_objects,
                          seed=setup.seed)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = report.to_dict()
    _write_json(out_dir / "sort_report.json", payload)
    plant.write_scenario_fragment(
        out_dir / "biodegradable_fragment.json",
        base_scenario=setup.pipeline.get("digest_scenario_base", "food_waste"),
        vs_loaded=report.biodegradable_vs_g,
        provenance="correctly binned food waste from the sort line, converted at the configured VS fraction")
    _manifest(setup, "sortline", report.elapsed_hours * 60.0).write(out_dir / "manifest.json")
    return payload


def cmd_digest(args) -> int:
    overrides: dict = {}
    if args.out:
        overrides["out_dir"] = args.out
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.scenario:
        overrides["scenario"] = args.scenario
    if args.scenario_fragment:
        overrides["scenario"] = args.scenario_fragment
    if args.days is not None:
        if args.days <= 0:
            return _fail("--days must be positive", USAGE_EXIT)
        overrides["digest"] = {"days": args.days}
    try:
        cfg = resolve_config(args.config, overrides)
        setup = build_setup(cfg)
    except (ConfigError, plant.ScenarioError) as exc:
        return _fail(str(exc), USAGE_EXIT)
    try:
        summary = _run_digest(setup, setup.out_dir / "digest")
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        return _fail(str(exc), RUNTIME_EXIT)
    print(f"digest: {summary['total_gas_l']:.3f} L over {summary['days']:g} days "
          f"(peak day {summary['peak_day']})")
    return 0


def cmd_optimize(args) -> int:
    overrides: dict = {}
    if args.out:
        overrides["out_dir"] = args.out
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.objective:
        key = {"track_pressure": control.TRACK_PRESSURE,
               "maximize_gas_rate": control.MAXIMIZE_GAS_RATE}.get(args.objective)
        if key is None:
            return _fail(f"unknown objective {args.objective!r}", USAGE_EXIT)
        overrides["campaign"] = {"objective": key}
    if args.days is not None:
        if args.days <= 0:
            return _fail("--days must be positive", USAGE_EXIT)
        overrides.setdefault("campaign", {})["days"] = args.days
    try:
        cfg = resolve_config(args.config, overrides)
        setup = build_setup(cfg)
    except (ConfigError, plant.ScenarioError) as exc:
        return _fail(str(exc), USAGE_EXIT)
    try:
        payload = _run_optimize(setup, setup.out_dir / "optimize")
    except Exception as exc:  # noqa: BLE001
        return _fail(str(exc), RUNTIME_EXIT)
    r2 = payload["final_holdout_r2"]
    print(f"optimize: {len(payload['cycles'])} cycles, "
          f"holdout R^2 {'n/a' if r2 is None else f'{r2:.3f}'}")
    return 0


def cmd_sortline(args) -> int:
    overrides: dict = {}
    if args.out:
        overrides["out_dir"] = args.out
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.objects is not None:
        if args.objects <= 0:
            return _fail("--objects must be positive", USAGE_EXIT)
        overrides["sortline"] = {"objects": args.objects}
    try:
        cfg = resolve_config(args.config, overrides)
        setup = build_setup(cfg)
    except (ConfigError, plant.ScenarioError) as exc:
        return _fail(str(exc), USAGE_EXIT)
    try:
        payload = _run_sortline(setup, setup.out_dir / "sortline")
    except Exception as exc:  # noqa: BLE001
        return _fail(str(exc), RUNTIME_EXIT)
    acc = payload["accuracy"]
    print(f"sortline: {payload['n_objects']} objects, accuracy "
          f"{'n/a' if acc is None else f'{acc:.4f}'}, "
          f"{payload['biodegradable_vs_g']:.1f} gVS recovered")
    return 0


def cmd_pipeline(args) -> int:
    overrides: dict = {}
    if args.out:
        overrides["out_dir"] = args.out
    if args.seed is not None:
        overrides["seed"] = args.seed
    try:
        cfg = resolve_config(args.config, overrides)
        setup = build_setup(cfg)
    except (ConfigError, plant.ScenarioError) as exc:
        return _fail(str(exc), USAGE_EXIT)

    pipe = setup.pipeline
    out_root = setup.out_dir / "pipeline"
    try:
        sort_setup = replace(setup, n_objects=int(pipe.get("objects", setup.n_objects)))
        sort_payload = _run_sortline(sort_setup, out_root / "sortline")

        fragment_path = out_root / "sortline" / "biodegradable_fragment.json"
        fragment_scenario = plant.load_scenario_fragment(fragment_path)
        digest_setup = replace(
            setup, scenario=fragment_scenario,
            digest_days=float(pipe.get("digest_days", setup.digest_days)),
            digest_setpoint=fragment_scenario.t_opt)
        digest_payload = _run_digest(digest_setup, out_root / "digest")

        policy = replace(setup.policy,
                         objective=pipe.get("objective", setup.policy.objective))
        optimize_setup = replace(
            setup, scenario=fragment_scenario, policy=policy,
            campaign_days=float(pipe.get("optimize_days", setup.campaign_days)))
        optimize_payload = _run_optimize(optimize_setup, out_root / "optimize")
    except Exception as exc:  # noqa: BLE001
        return _fail(str(exc), RUNTIME_EXIT)

    summary = {
        "config_digest": setup.digest_hex,
        "sortline": sort_payload,
        "digest": digest_payload,
        "optimize": optimize_payload,
    }
    _write_json(out_root / "summary.json", summary)
    print(f"pipeline: {sort_payload['biodegradable_vs_g']:.1f} gVS sorted -> "
          f"{digest_payload['total_gas_l']:.3f} L gas -> "
          f"{len(optimize_payload['cycles'])} adaptation cycles")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wastetwin",
        description="Simulated sorting cell + adaptive bio-digestor twin")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="run config JSON (defaults ship in the package)")
        p.add_argument("--out", help="output directory root")
        p.add_argument("--seed", type=int, help="master seed override")

    p = sub.add_parser("digest", help="PID-regulated batch digestion run")
    common(p)
    p.add_argument("--days", type=float)
    p.add_argument("--scenario", help="packaged scenario name or scenario JSON path")
    p.add_argument("--scenario-fragment", help="scenario fragment JSON from the sort line")
    p.set_defaults(func=cmd_digest)

    p = sub.add_parser("optimize", help="adaptive surrogate+swarm setpoint campaign")
    common(p)
    p.add_argument("--days", type=float)
    p.add_argument("--objective", choices=["track_pressure", "maximize_gas_rate"])
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("sortline", help="robotic sorting cell run")
    common(p)
    p.add_argument("--objects", type=int)
    p.set_defaults(func=cmd_sortline)

    p = sub.add_parser("pipeline", help="sortline -> digest -> optimize, end to end")
    common(p)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
