"""Closed-loop supervision: PID heating, safety thresholds, adaptive setpoints.

The adaptation cycle mirrors the plant-facing workflow: log telemetry under
the current setpoints, periodically fit a regression surrogate on a trailing
window of setpoint eras, minimize an objective over the surrogate with the
particle swarm, and apply the winning setpoints through the safety filter.
Setpoint exploration (a Latin hypercube bootstrap plus small per-era jitter)
keeps the surrogate identifiable throughout the run.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import regression
from .plant import (
    Actuators,
    DigestorState,
    PlantParams,
    DEFAULT_PARAMS,
    SensorModel,
    NOISELESS_SENSORS,
    SubstrateScenario,
    initial_state,
    step_plant,
)
from .pso import OptimizationResult, PsoConfig, optimize
from .telemetry import TelemetryRun

TRACK_PRESSURE = "track_pressure"
MAXIMIZE_GAS_RATE = "maximize_gas_rate"
OBJECTIVES = (TRACK_PRESSURE, MAXIMIZE_GAS_RATE)

ACTION_CLAMP = "clamp_actuators"
ACTION_VENT = "emergency_vent"
ACTION_HALT = "halt"
SAFETY_ACTIONS = (ACTION_CLAMP, ACTION_VENT, ACTION_HALT)


class ControlError(ValueError):
    """Invalid controller or campaign configuration."""


class SensorFaultError(ValueError):
    """Controller received a non-finite measurement."""


# ---------------------------------------------------------------------------
# PID


@dataclass(frozen=True)
class PidGains:
    """Positional PID gains; ki integrates per minute, kd differentiates per minute.

    Shipped defaults come from scripts/tune_pid.py (relay-based ultimate-cycle
    identification on the default thermal constants, backed off until the
    37 degC step shows no overshoot beyond 2 degC).
    """

    kp: float = 15.0   # W/degC
    ki: float = 0.5    # W/(degC*min)
    kd: float = 0.0    # W*min/degC
    output_min: float = 0.0
    output_max: float = 250.0
    integral_clamp: float = 200.0  # bound on the integral term's contribution, W

    def __post_init__(self):
        if not (self.output_min < self.output_max):
            raise ControlError("output_min must be < output_max")
        if min(self.kp, self.ki, self.kd) < 0:
            raise ControlError("gains must be >= 0")
        if self.integral_clamp < 0:
            raise ControlError("integral_clamp must be >= 0")


@dataclass(frozen=True)
class PidState:
    integral_term: float = 0.0  # W
    prev_error: float | None = None


def pid_step(gains: PidGains, setpoint: float, measurement: float, dt_min: float,
             state: PidState | None = None) -> tuple[float, PidState]:
    """One positional PID update with clamped, saturation-frozen integral."""
    if dt_min <= 0:
        raise ControlError("dt must be positive")
    if not np.isfinite(measurement):
        raise SensorFaultError(f"non-finite measurement {measurement!r}")
    state = state or PidState()
    error = setpoint - measurement
    p_term = gains.kp * error
    d_term = 0.0
    if gains.kd > 0 and state.prev_error is not None:
        d_term = gains.kd * (error - state.prev_error) / dt_min
    integral = state.integral_term + gains.ki * error * dt_min
    integral = float(np.clip(integral, -gains.integral_clamp, gains.integral_clamp))
    raw = p_term + integral + d_term
    # anti-windup: do not integrate while pushing further into saturation
    if raw > gains.output_max and error > 0:
        integral = state.integral_term
    elif raw < gains.output_min and error < 0:
        integral = state.integral_term
    output = float(np.clip(p_term + integral + d_term, gains.output_min, gains.output_max))
    return output, PidState(integral_term=integral, prev_error=error)


# ---------------------------------------------------------------------------
# Safety


@dataclass(frozen=True)
class SafetyEnvelope:
    temperature: tuple[float, float] = (10.0, 50.0)
    ph: tuple[float, float] = (4.0, 10.0)
    pressure: tuple[float, float] = (0.0, 15.0)
    action: str = ACTION_CLAMP

    def __post_init__(self):
        for label in ("temperature", "ph", "pressure"):
            lo, hi = getattr(self, label)
            if not (lo < hi):
                raise ControlError(f"envelope {label} must have min < max")
        if self.action not in SAFETY_ACTIONS:
            raise ControlError(f"unknown safety action {self.action!r}")


@dataclass(frozen=True)
class SafetyEvent:
    t_min: float
    channel: str
    action: str


def enforce_safety(state: DigestorState, envelope: SafetyEnvelope,
                   actuators: Actuators) -> tuple[Actuators, list[SafetyEvent]]:
    """Apply the configured action to any channel outside its envelope.

    Never raises: safety acts. In-envelope states pass actuators through
    unchanged and emit no events.
    """
    t_min = state.t_days * 1440.0
    violations = []
    for channel, value in (("temperature", state.temperature),
                           ("ph", state.ph),
                           ("pressure", state.pressure)):
        lo, hi = getattr(envelope, channel)
        if value < lo or value > hi:
            violations.append((channel, value, lo, hi))
    if not violations:
        return actuators, []
    events = [SafetyEvent(t_min, channel, envelope.action) for channel, *_ in violations]
    out = actuators
    if envelope.action == ACTION_VENT:
        out = replace(out, vent_open=True)
    elif envelope.action == ACTION_HALT:
        out = Actuators(heater_power=0.0, stirrer_rpm=0.0, vent_open=True)
    else:  # clamp_actuators: push the violating channel back toward its envelope
        for channel, value, lo, hi in violations:
            if channel == "temperature":
                if value < lo:
                    out = replace(out, heater_power=250.0 if out.heater_power <= 0 else
                                  max(out.heater_power, 250.0))
                else:
                    out = replace(out, heater_power=0.0)
            elif channel == "pressure" and value > hi:
                out = replace(out, vent_open=True)
    return out, events


def write_safety_events_csv(events: Sequence[SafetyEvent], path: str | Path) -> None:
    lines = ["time,channel,action"]
    lines += [f"{format(e.t_min, '.17g')},{e.channel},{e.action}" for e in events]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Adaptive campaign


@dataclass(frozen=True)
class SetpointBounds:
    temperature: tuple[float, float] = (30.0, 37.5)
    rpm: tuple[float, float] = (20.0, 120.0)

    def __post_init__(self):
        for label in ("temperature", "rpm"):
            lo, hi = getattr(self, label)
            if lo > hi:
                raise ControlError(f"setpoint bounds for {label} inverted")

    def collapsed(self, label: str) -> bool:
        lo, hi = getattr(self, label)
        return lo == hi


@dataclass(frozen=True)
class AdaptationPolicy:
    """Cadence and search space of the refit-optimize-apply loop."""

    refit_period_hours: float = 6.0
    feature_map: str = regression.QUADRATIC
    pso_config: PsoConfig = field(default_factory=lambda: PsoConfig(
        bounds=((30.0, 37.5), (20.0, 120.0)), swarm_size=24, max_iterations=40))
    setpoint_bounds: SetpointBounds = field(default_factory=SetpointBounds)
    objective: str = TRACK_PRESSURE
    pressure_target: float = 0.8  # kPa, track_pressure mode
    era_hours: float = 2.0        # one setpoint application per era
    window_hours: float = 72.0    # trailing telemetry window per refit
    bootstrap_hours: float = 24.0  # Latin hypercube exploration before the first fit
    jitter_fraction: float = 0.03  # per-era setpoint dither, fraction of bound width
    exploration_phase_fraction: float = 0.75  # keep one full-box era per cycle this long
    era_tail_fraction: float = 0.5  # era tail used for the per-era summary means
    holdout_grid: int = 5
    holdout_settle_hours: float = 4.0
    holdout_measure_hours: float = 2.0
    vent_open: bool = True

    def __post_init__(self):
        if self.refit_period_hours <= 0:
            raise ControlError("refit_period_hours must be > 0")
        if self.objective not in OBJECTIVES:
            raise ControlError(f"unknown objective {self.objective!r}")
        if self.feature_map not in regression.FEATURE_MAPS:
            raise ControlError(f"unknown feature map {self.feature_map!r}")
        for name in ("era_hours", "window_hours", "bootstrap_hours"):
            if getattr(self, name) <= 0:
                raise ControlError(f"{name} must be > 0")
        if abs(self.refit_period_hours % self.era_hours) > 1e-9:
            raise ControlError("refit_period_hours must be a multiple of era_hours")
        if abs(self.bootstrap_hours % self.era_hours) > 1e-9:
            raise ControlError("bootstrap_hours must be a multiple of era_hours")
        if not (0.0 <= self.jitter_fraction <= 0.5):
            raise ControlError("jitter_fraction must be in [0, 0.5]")
        if not (0.0 <= self.exploration_phase_fraction <= 1.0):
            raise ControlError("exploration_phase_fraction must be in [0, 1]")
        if not (0.0 < self.era_tail_fraction <= 1.0):
            raise ControlError("era_tail_fraction must be in (0, 1]")
        if self.holdout_grid < 2:
            raise ControlError("holdout_grid must be >= 2")


def validate_policy(policy: AdaptationPolicy, envelope: SafetyEnvelope) -> None:
    t_lo, t_hi = policy.setpoint_bounds.temperature
    e_lo, e_hi = envelope.temperature
    if t_lo < e_lo or t_hi > e_hi:
        raise ControlError(
            f"temperature setpoint bounds ({t_lo}, {t_hi}) exceed safety envelope ({e_lo}, {e_hi})"
        )


@dataclass(frozen=True)
class EraSummary:
    t_start_min: float
    t_end_min: float
    temperature_setpoint: float
    rpm: float
    ph_mean: float
    pressure_mean: float
    gas_rate_mean: float
    n_samples: int


@dataclass(frozen=True)
class CycleRecord:
    index: int
    t_start_min: float
    n_rows: int
    train_r2: float | None
    setpoints: dict
    pso_best_value: float | None
    pso_trace: tuple[tuple[int, float], ...]
    degraded: bool
    note: str = ""


@dataclass
class CampaignReport:
    run_id: str
    objective: str
    cycles: list[CycleRecord]
    eras: list[EraSummary]
    final_holdout_r2: float | None
    holdout: dict | None
    telemetry: TelemetryRun
    pressure_times_min: np.ndarray
    pressure_values: np.ndarray
    safety_events: list[SafetyEvent]
    final_state: DigestorState
    final_model: regression.RegressionModel | None

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "objective": self.objective,
            "final_holdout_r2": self.final_holdout_r2,
            "holdout": self.holdout,
            "cycles": [
                {
                    "index": c.index,
                    "t_start_min": c.t_start_min,
                    "n_rows": c.n_rows,
                    "train_r2": c.train_r2,
                    "setpoints": c.setpoints,
                    "pso_best_value": c.pso_best_value,
                    "degraded": c.degraded,
                    "note": c.note,
                }
                for c in self.cycles
            ],
            "eras": [
                {
                    "t_start_min": e.t_start_min,
                    "temperature_setpoint": e.temperature_setpoint,
                    "rpm": e.rpm,
                    "ph_mean": e.ph_mean,
                    "pressure_mean": e.pressure_mean,
                    "gas_rate_mean": e.gas_rate_mean,
                }
                for e in self.eras
            ],
            "safety_events": [
                {"t_min": e.t_min, "channel": e.channel, "action": e.action}
                for e in self.safety_events
            ],
        }


def latin_hypercube(n: int, bounds: Sequence[tuple[float, float]],
                    rng: np.random.Generator) -> np.ndarray:
    """n stratified points inside the box, one per stratum per dimension."""
    out = np.empty((n, len(bounds)))
    for j, (lo, hi) in enumerate(bounds):
        strata = (rng.permutation(n) + rng.random(n)) / n
        out[:, j] = lo + strata * (hi - lo)
    return out


def stabilization_ratio(values: Sequence[float], tail_fraction: float = 0.2) -> float:
    """std of the trailing fraction divided by the full range; 0 for flat traces."""
    v = np.asarray(values, dtype=float)
    if v.size < 5:
        raise ControlError("need at least 5 samples")
    span = float(v.max() - v.min())
    if span == 0.0:
        return 0.0
    tail = v[int(np.floor(v.size * (1.0 - tail_fraction))):]
    return float(np.std(tail) / span)


def _era_dataset(summaries: Sequence[EraSummary], varying: list[str],
                 objective: str) -> regression.Dataset:
    cols = []
    for s in summaries:
        row = []
        if "temperature" in varying:
            row.append(s.temperature_setpoint)
        if "rpm" in varying:
            row.append(s.rpm)
        row.append(s.ph_mean)
        cols.append(row)
    target = [s.pressure_mean if objective == TRACK_PRESSURE else s.gas_rate_mean
              for s in summaries]
    return regression.Dataset(np.array(cols), np.array(target))


def _surrogate_objective(model: regression.RegressionModel, varying: list[str],
                         fixed: dict, ph_now: float, objective: str,
                         pressure_target: float):
    def f(x: np.ndarray) -> float:
        features = []
        k = 0
        for dim in ("temperature", "rpm"):
            if dim in varying:
                features.append(float(x[k]))
                k += 1
            else:
                features.append(fixed[dim])
        # surrogate feature order matches _era_dataset: varying dims then pH
        feat = [features[0]] if "temperature" in varying else []
        if "rpm" in varying:
            feat.append(features[1])
        feat.append(ph_now)
        pred = regression.predict(model, np.array(feat))
        if objective == TRACK_PRESSURE:
            return (pred - pressure_target) ** 2
        return -pred

    return f


def run_adaptive_campaign(scenario: SubstrateScenario, policy: AdaptationPolicy,
                          gains: PidGains, envelope: SafetyEnvelope,
                          duration_days: float, dt_min: float = 5.0,
                          sensors: SensorModel = NOISELESS_SENSORS,
                          params: PlantParams = DEFAULT_PARAMS,
                          seed: int = 0, run_id: str = "campaign") -> CampaignReport:
    """Run the sense-fit-optimize-apply loop for the whole campaign.

    A surrogate fit failure in a cycle never halts the run: the previous
    setpoints stay applied and the cycle is recorded as degraded.
    """
    validate_policy(policy, envelope)
    if duration_days <= 0:
        raise ControlError("duration must be positive")
    steps_per_era = policy.era_hours * 60.0 / dt_min
    if abs(steps_per_era - round(steps_per_era)) > 1e-9:
        raise ControlError("era_hours must be a whole number of dt steps")
    steps_per_era = int(round(steps_per_era))
    total_hours = duration_days * 24.0
    n_eras = int(np.floor(total_hours / policy.era_hours + 1e-9))
    if n_eras * policy.era_hours < policy.bootstrap_hours + policy.refit_period_hours:
        raise ControlError("duration too short: no adaptation cycle after bootstrap")

    bounds = policy.setpoint_bounds
    varying = [d for d in ("temperature", "rpm") if not bounds.collapsed(d)]
    fixed = {d: getattr(bounds, d)[0] for d in ("temperature", "rpm")
             if bounds.collapsed(d)}
    n_features = len(varying) + 1  # pH rides along as a measured covariate
    min_rows = regression.expanded_width(n_features, policy.feature_map) + 1
    n_bootstrap = int(round(policy.bootstrap_hours / policy.era_hours))
    if varying and n_bootstrap < min_rows:
        raise ControlError(
            f"bootstrap provides {n_bootstrap} rows but the surrogate needs {min_rows}"
        )

    ss = np.random.SeedSequence(seed)
    sensor_ss, explore_ss, pso_ss, _holdout_ss = ss.spawn(4)
    sensor_rng = np.random.default_rng(sensor_ss)
    explore_rng = np.random.default_rng(explore_ss)
    pso_seed_rng = np.random.default_rng(pso_ss)

    lhs_points = (latin_hypercube(n_bootstrap, [getattr(bounds, d) for d in varying],
                                  explore_rng) if varying else
                  np.zeros((n_bootstrap, 0)))

    def lhs_setpoints(i: int) -> dict:
        out = dict(fixed)
        for j, dim in enumerate(varying):
            out[dim] = float(lhs_points[i, j])
        return out

    def jittered(setpoints: dict) -> dict:
        out = dict(setpoints)
        for dim in varying:
            lo, hi = getattr(bounds, dim)
            width = hi - lo
            out[dim] = float(np.clip(
                setpoints[dim] + explore_rng.uniform(-1, 1) * policy.jitter_fraction * width,
                lo, hi))
        return out

    def exploration_point() -> dict:
        out = dict(fixed)
        for dim in varying:
            lo, hi = getattr(bounds, dim)
            out[dim] = float(explore_rng.uniform(lo, hi))
        return out

    telemetry = TelemetryRun(run_id)
    state = initial_state(scenario, params)
    pid_state = PidState()
    temp_measurement = state.temperature
    safety_events: list[SafetyEvent] = []
    summaries: list[EraSummary] = []
    cycles: list[CycleRecord] = []
    model: regression.RegressionModel | None = None
    chosen = lhs_setpoints(0)
    next_sample = sensors.sample_period_min
    eras_per_cycle = int(round(policy.refit_period_hours / policy.era_hours))
    exploration_until_h = policy.exploration_phase_fraction * n_eras * policy.era_hours

    for era_index in range(n_eras):
        era_start_h = era_index * policy.era_hours
        in_bootstrap = era_start_h < policy.bootstrap_hours - 1e-9
        if in_bootstrap:
            era_setpoints = lhs_setpoints(era_index)
        else:
            sub = int(round((era_start_h - policy.bootstrap_hours) / policy.era_hours)) % eras_per_cycle
            if sub == 0:
                cycle_index = len(cycles)
                cycle, model, chosen = _refit_cycle(
                    cycle_index, era_start_h, summaries, policy, varying, fixed,
                    chosen, model, pso_seed_rng, min_rows)
                cycles.append(cycle)
                era_setpoints = dict(chosen)
            elif (sub == eras_per_cycle - 1 and eras_per_cycle >= 3
                  and era_start_h < exploration_until_h):
                era_setpoints = exploration_point()
            else:
                era_setpoints = jittered(chosen)
        # clamp applied setpoints into both the search box and the envelope
        t_sp = float(np.clip(era_setpoints["temperature"], *bounds.temperature))
        t_sp = float(np.clip(t_sp, *envelope.temperature))
        rpm = float(np.clip(era_setpoints["rpm"], *bounds.rpm))

        tail_from = (era_start_h + policy.era_hours * (1 - policy.era_tail_fraction)) * 60.0
        tail = {"ph": [], "pressure": [], "gas_rate": []}
        for _ in range(steps_per_era):
            power, pid_state = pid_step(gains, t_sp, temp_measurement, dt_min, pid_state)
            actuators = Actuators(heater_power=power, stirrer_rpm=rpm,
                                  vent_open=policy.vent_open)
            actuators, events = enforce_safety(state, envelope, actuators)
            safety_events.extend(events)
            t_now_min = state.t_days * 1440.0
            sample_due = t_now_min + dt_min >= next_sample - 1e-9
            state, records = step_plant(state, scenario, actuators, dt_min,
                                        sensors=sensors if sample_due else None,
                                        rng=sensor_rng, params=params)
            if sample_due:
                telemetry.extend(records)
                next_sample += sensors.sample_period_min
                by_channel = {r.channel: r.value for r in records}
                temp_measurement = by_channel["temperature"]
                if state.t_days * 1440.0 >= tail_from - 1e-9:
                    for key in tail:
                        tail[key].append(by_channel[key])
        if not tail["pressure"]:
            raise ControlError("era tail produced no samples; lower sample_period_min")
        summaries.append(EraSummary(
            t_start_min=era_start_h * 60.0,
            t_end_min=(era_start_h + policy.era_hours) * 60.0,
            temperature_setpoint=t_sp,
            rpm=rpm,
            ph_mean=float(np.mean(tail["ph"])),
            pressure_mean=float(np.mean(tail["pressure"])),
            gas_rate_mean=float(np.mean(tail["gas_rate"])),
            n_samples=len(tail["pressure"]),
        ))

    holdout_r2, holdout = _holdout_eval(model, state, scenario, policy, gains,
                                        envelope, varying, fixed, dt_min, params)
    times, values = telemetry.values("pressure")
    return CampaignReport(
        run_id=run_id,
        objective=policy.objective,
        cycles=cycles,
        eras=summaries,
        final_holdout_r2=holdout_r2,
        holdout=holdout,
        telemetry=telemetry,
        pressure_times_min=times,
        pressure_values=values,
        safety_events=safety_events,
        final_state=state,
        final_model=model,
    )


def _refit_cycle(index: int, era_start_h: float, summaries: list[EraSummary],
                 policy: AdaptationPolicy, varying: list[str], fixed: dict,
                 previous: dict, previous_model, pso_seed_rng,
                 min_rows: int) -> tuple[CycleRecord, regression.RegressionModel | None, dict]:
    t_now_min = era_start_h * 60.0
    window_from = t_now_min - policy.window_hours * 60.0
    rows = [s for s in summaries if s.t_end_min <= t_now_min + 1e-9
            and s.t_end_min > window_from + 1e-9]
    if not varying:
        point = dict(fixed)
        record = CycleRecord(index, t_now_min, len(rows), None, dict(point), None,
                             (), degraded=False, note="fixed setpoint bounds")
        return record, previous_model, point
    try:
        dataset = _era_dataset(rows, varying, policy.objective)
        model = regression.fit(dataset, policy.feature_map)
    except (regression.FitError, regression.InputError) as exc:
        record = CycleRecord(index, t_now_min, len(rows), None, dict(previous), None,
                             (), degraded=True, note=f"surrogate fit failed: {exc}")
        return record, previous_model, dict(previous)
    ph_now = rows[-1].ph_mean
    objective = _surrogate_objective(model, varying, fixed, ph_now,
                                     policy.objective, policy.pressure_target)
    pso_config = replace(policy.pso_config,
                         bounds=tuple(getattr(policy.setpoint_bounds, d) for d in varying),
                         seed=int(pso_seed_rng.integers(2**63)))
    result: OptimizationResult = optimize(pso_config, objective)
    chosen = dict(fixed)
    for j, dim in enumerate(varying):
        chosen[dim] = float(result.best_position[j])
    record = CycleRecord(index, t_now_min, len(rows), model.train_r2, dict(chosen),
                         result.best_value, result.convergence_trace, degraded=False)
    return record, model, chosen


def run_regulated(scenario: SubstrateScenario, gains: PidGains, envelope: SafetyEnvelope,
                  setpoint: float, stirrer_rpm: float, duration_days: float,
                  dt_min: float = 15.0, sensors: SensorModel = NOISELESS_SENSORS,
                  params: PlantParams = DEFAULT_PARAMS, vent_open: bool = False,
                  run_id: str = "digest") -> tuple["ScenarioRun", list[SafetyEvent]]:
    """Plain PID-regulated plant run at one fixed setpoint, safety-filtered.

    The controller acts on the sampled (noisy, zero-order-held) temperature,
    like the campaign loop does.
    """
    from .plant import ScenarioRun  # local to avoid a module-level cycle

    if duration_days <= 0:
        raise ControlError("duration must be positive")
    state = initial_state(scenario, params)
    rng = np.random.default_rng(np.random.SeedSequence(sensors.seed))
    telemetry = TelemetryRun(run_id)
    pid_state = PidState()
    measurement = state.temperature
    events: list[SafetyEvent] = []
    n_steps = int(round(duration_days * 1440.0 / dt_min))
    next_sample = sensors.sample_period_min
    times = [0.0]
    trace = {key: [getattr(state, key)] for key in
             ("temperature", "ph", "pressure", "gas_rate", "gas_cumulative")}
    for _ in range(n_steps):
        power, pid_state = pid_step(gains, setpoint, measurement, dt_min, pid_state)
        actuators = Actuators(heater_power=power, stirrer_rpm=stirrer_rpm,
                              vent_open=vent_open)
        actuators, new_events = enforce_safety(state, envelope, actuators)
        events.extend(new_events)
        t_now = state.t_days * 1440.0
        sample_due = t_now + dt_min >= next_sample - 1e-9
        state, records = step_plant(state, scenario, actuators, dt_min,
                                    sensors=sensors if sample_due else None,
                                    rng=rng, params=params)
        if sample_due:
            telemetry.extend(records)
            next_sample += sensors.sample_period_min
            measurement = next(r.value for r in records if r.channel == "temperature")
        times.append(state.t_days * 1440.0)
        for key in trace:
            trace[key].append(getattr(state, key))
    run = ScenarioRun(
        telemetry=telemetry,
        final_state=state,
        times_min=np.array(times),
        temperature=np.array(trace["temperature"]),
        ph=np.array(trace["ph"]),
        pressure=np.array(trace["pressure"]),
        gas_rate=np.array(trace["gas_rate"]),
        gas_cumulative=np.array(trace["gas_cumulative"]),
    )
    return run, events


def _holdout_eval(model, snapshot: DigestorState, scenario, policy: AdaptationPolicy,
                  gains: PidGains, envelope: SafetyEnvelope, varying: list[str],
                  fixed: dict, dt_min: float, params: PlantParams):
    """Score the final surrogate against fresh plant runs on a setpoint grid.

    Every grid point restarts from the same end-of-campaign snapshot, settles
    under PID at the grid setpoint, and reports the noise-free mean response
    over the measurement window.
    """
    if model is None or not varying:
        return None, None
    axes = {}
    for dim in ("temperature", "rpm"):
        if dim in varying:
            lo, hi = getattr(policy.setpoint_bounds, dim)
            axes[dim] = np.linspace(lo, hi, policy.holdout_grid)
        else:
            axes[dim] = np.array([fixed[dim]])
    observed, predicted, grid_t, grid_rpm = [], [], [], []
    settle_steps = int(round(policy.holdout_settle_hours * 60.0 / dt_min))
    measure_steps = int(round(policy.holdout_measure_hours * 60.0 / dt_min))
    for t_sp in axes["temperature"]:
        for rpm in axes["rpm"]:
            state = snapshot
            pid_state = PidState()
            response, ph_vals = [], []
            for k in range(settle_steps + measure_steps):
                power, pid_state = pid_step(gains, float(t_sp), state.temperature,
                                            dt_min, pid_state)
                actuators = Actuators(heater_power=power, stirrer_rpm=float(rpm),
                                      vent_open=policy.vent_open)
                actuators, _ = enforce_safety(state, envelope, actuators)
                state, _ = step_plant(state, scenario, actuators, dt_min, params=params)
                if k >= settle_steps:
                    response.append(state.pressure if policy.objective == TRACK_PRESSURE
                                    else state.gas_rate)
                    ph_vals.append(state.ph)
            feat = []
            if "temperature" in varying:
                feat.append(float(t_sp))
            if "rpm" in varying:
                feat.append(float(rpm))
            feat.append(float(np.mean(ph_vals)))
            observed.append(float(np.mean(response)))
            predicted.append(regression.predict(model, np.array(feat)))
            grid_t.append(float(t_sp))
            grid_rpm.append(float(rpm))
    try:
        r2 = regression.r2_score(observed, predicted)
    except regression.UndefinedMetricError:
        r2 = None
    holdout = {"temperature": grid_t, "rpm": grid_rpm,
               "observed": observed, "predicted": predicted}
    return r2, holdout
