"""Run configuration: one resolved JSON document (with includes) per run.

The entire document is validated and every component is constructed before
any simulation starts, so an invalid config never produces partial outputs.
CLI flags only override scalar fields.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from . import control, plant, pso, regression
from .segregation import homography as homography_mod
from .segregation import kinematics, sortline, vision
from .telemetry import config_digest


class ConfigError(ValueError):
    """Invalid or missing configuration."""


def default_config() -> dict:
    text = resources.files("wastetwin").joinpath("data/default_config.json").read_text()
    return json.loads(text)


def _deep_merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def _load_json(path: Path) -> dict:
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return raw


def resolve_config(path: str | Path | None = None,
                   overrides: dict | None = None) -> dict:
    """Defaults, then include files in order, then the named file, then overrides."""
    resolved = default_config()
    if path is not None:
        path = Path(path)
        raw = _load_json(path)
        includes = raw.pop("include", [])
        if not isinstance(includes, list):
            raise ConfigError("include must be a list of paths")
        for inc in includes:
            resolved = _deep_merge(resolved, _load_json(path.parent / inc))
        resolved = _deep_merge(resolved, raw)
    if overrides:
        resolved = _deep_merge(resolved, overrides)
    return resolved


@dataclass
class RunSetup:
    """Every component of a run, fully constructed and validated."""

    raw: dict
    digest_hex: str
    seed: int
    out_dir: Path
    scenario: plant.SubstrateScenario
    params: plant.PlantParams
    sensors: plant.SensorModel
    gains: control.PidGains
    envelope: control.SafetyEnvelope
    policy: control.AdaptationPolicy
    campaign_days: float
    campaign_dt_min: float
    digest_days: float
    digest_dt_min: float
    digest_actuators: plant.Actuators
    digest_setpoint: float
    stream: sortline.StreamConfig
    classifier: vision.ClassifierModel
    threshold: float
    arm: kinematics.ArmModel
    homography: homography_mod.Homography
    n_objects: int
    pipeline: dict = field(default_factory=dict)


def _section(cfg: dict, name: str) -> dict:
    raw = cfg.get(name)
    if not isinstance(raw, dict):
        raise ConfigError(f"missing config section {name!r}")
    return raw


def _get(section: dict, key: str, kind, where: str):
    if key not in section:
        raise ConfigError(f"missing key {where}.{key}")
    try:
        return kind(section[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {where}.{key}: {exc}") from exc


def build_setup(cfg: dict) -> RunSetup:
    """Construct and cross-validate everything; raises ConfigError on any problem."""
    try:
        return _build_setup(cfg)
    except ConfigError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def _build_setup(cfg: dict) -> RunSetup:
    seed = int(cfg.get("seed", 0))
    out_dir = Path(cfg.get("out_dir", "out"))

    scenario = plant.load_scenario(cfg.get("scenario", "lignocellulose"))
    params = plant.PlantParams(**cfg["plant"]) if "plant" in cfg else plant.DEFAULT_PARAMS

    s = _section(cfg, "sensors")
    sensors = plant.SensorModel(
        sigmas={str(k): float(v) for k, v in s.get("sigmas", {}).items()},
        biases={str(k): float(v) for k, v in s.get("biases", {}).items()},
        sample_period_min=_get(s, "sample_period_min", float, "sensors"),
        seed=seed,
    )

    p = _section(cfg, "pid")
    gains = control.PidGains(
        kp=_get(p, "kp", float, "pid"),
        ki=_get(p, "ki", float, "pid"),
        kd=_get(p, "kd", float, "pid"),
        output_min=_get(p, "output_min", float, "pid"),
        output_max=_get(p, "output_max", float, "pid"),
        integral_clamp=_get(p, "integral_clamp", float, "pid"),
    )

    sa = _section(cfg, "safety")
    envelope = control.SafetyEnvelope(
        temperature=tuple(sa["temperature"]),
        ph=tuple(sa["ph"]),
        pressure=tuple(sa["pressure"]),
        action=str(sa["action"]),
    )

    ps = _section(cfg, "pso")
    ca = _section(cfg, "campaign")
    bounds_raw = ca["setpoint_bounds"]
    setpoint_bounds = control.SetpointBounds(
        temperature=tuple(bounds_raw["temperature"]),
        rpm=tuple(bounds_raw["rpm"]),
    )
    pso_bounds = []
    for dim in ("temperature", "rpm"):
        lo, hi = getattr(setpoint_bounds, dim)
        if lo < hi:
            pso_bounds.append((lo, hi))
    if not pso_bounds:
        pso_bounds = [(0.0, 1.0)]  # placeholder; campaign skips PSO when fully collapsed
    pso_config = pso.PsoConfig(
        bounds=tuple(pso_bounds),
        swarm_size=_get(ps, "swarm_size", int, "pso"),
        inertia_weight=_get(ps, "inertia_weight", float, "pso"),
        cognitive_coeff=_get(ps, "cognitive_coeff", float, "pso"),
        social_coeff=_get(ps, "social_coeff", float, "pso"),
        max_iterations=_get(ps, "max_iterations", int, "pso"),
        velocity_clamp_fraction=_get(ps, "velocity_clamp_fraction", float, "pso"),
        tolerance=_get(ps, "tolerance", float, "pso"),
        stall_iterations=_get(ps, "stall_iterations", int, "pso"),
        seed=seed,
    )

    policy = control.AdaptationPolicy(
        refit_period_hours=_get(ca, "refit_period_hours", float, "campaign"),
        feature_map=str(ca.get("feature_map", regression.QUADRATIC)),
        pso_config=pso_config,
        setpoint_bounds=setpoint_bounds,
        objective=str(ca.get("objective", control.TRACK_PRESSURE)),
        pressure_target=_get(ca, "pressure_target", float, "campaign"),
        era_hours=_get(ca, "era_hours", float, "campaign"),
        window_hours=_get(ca, "window_hours", float, "campaign"),
        bootstrap_hours=_get(ca, "bootstrap_hours", float, "campaign"),
        jitter_fraction=_get(ca, "jitter_fraction", float, "campaign"),
        era_tail_fraction=_get(ca, "era_tail_fraction", float, "campaign"),
        holdout_grid=_get(ca, "holdout_grid", int, "campaign"),
        holdout_settle_hours=_get(ca, "holdout_settle_hours", float, "campaign"),
        holdout_measure_hours=_get(ca, "holdout_measure_hours", float, "campaign"),
    )
    control.validate_policy(policy, envelope)
    campaign_days = _get(ca, "days", float, "campaign")
    campaign_dt = _get(ca, "dt_minutes", float, "campaign")

    d = _section(cfg, "digest")
    digest_days = _get(d, "days", float, "digest")
    digest_dt = _get(d, "dt_minutes", float, "digest")
    digest_setpoint = (float(d["temperature_setpoint"])
                       if d.get("temperature_setpoint") is not None else scenario.t_opt)
    digest_actuators = plant.Actuators(
        heater_power=0.0,
        stirrer_rpm=_get(d, "stirrer_rpm", float, "digest"),
        vent_open=bool(d.get("vent_open", False)),
    )

    so = _section(cfg, "sortline")
    stream = sortline.StreamConfig(
        class_mix=tuple(float(x) for x in so["class_mix"]),
        arrival_rate_per_hour=_get(so, "arrival_rate_per_hour", float, "sortline"),
        mass_median_g=_get(so, "mass_median_g", float, "sortline"),
        mass_sigma=_get(so, "mass_sigma", float, "sortline"),
        vs_fraction=_get(so, "vs_fraction", float, "sortline"),
        pick_failure_prob=_get(so, "pick_failure_prob", float, "sortline"),
        image_width=_get(so, "image_width", float, "sortline"),
        image_height=_get(so, "image_height", float, "sortline"),
    )
    threshold = _get(so, "threshold", float, "sortline")
    n_objects = _get(so, "objects", int, "sortline")

    cl = _section(cfg, "classifier")
    if "confusion" in cl:
        classifier = vision.ClassifierModel(
            confusion=np.array(cl["confusion"], dtype=float),
            confidence_beta=np.array(cl["confidence_beta"], dtype=float),
            detect_prob=float(cl.get("detect_prob", 1.0)),
            seed=seed,
        )
    else:
        classifier = vision.diagonal_model(
            diagonal=_get(cl, "diagonal", float, "classifier"),
            correct_beta=tuple(cl.get("correct_beta", (8.0, 2.0))),
            incorrect_beta=tuple(cl.get("incorrect_beta", (2.0, 4.0))),
            detect_prob=float(cl.get("detect_prob", 1.0)),
            seed=seed,
        )

    arm_raw = cfg.get("arm")
    if arm_raw:
        arm = kinematics.ArmModel(
            dh=np.array(arm_raw["dh"], dtype=float),
            joint_limits=np.array(arm_raw["joint_limits"], dtype=float),
            max_joint_speed=float(arm_raw.get("max_joint_speed", 2.0)),
        )
    else:
        arm = kinematics.default_arm()

    hg = _section(cfg, "homography")
    h = homography_mod.fit_homography(np.array(hg["pixels"], dtype=float),
                                      np.array(hg["world"], dtype=float))

    return RunSetup(
        raw=cfg,
        digest_hex=config_digest(cfg),
        seed=seed,
        out_dir=out_dir,
        scenario=scenario,
        params=params,
        sensors=sensors,
        gains=gains,
        envelope=envelope,
        policy=policy,
        campaign_days=campaign_days,
        campaign_dt_min=campaign_dt,
        digest_days=digest_days,
        digest_dt_min=digest_dt,
        digest_actuators=digest_actuators,
        digest_setpoint=digest_setpoint,
        stream=stream,
        classifier=classifier,
        threshold=threshold,
        arm=arm,
        homography=h,
        n_objects=n_objects,
        pipeline=dict(cfg.get("pipeline", {})),
    )
