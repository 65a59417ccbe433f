"""Batch anaerobic digestion plant simulator.

The plant is the closed-loop ground truth: two-fraction sigmoid gas kinetics
(readily degradable + fibrous substrate), a first-order thermal balance with
stirring-enhanced heater coupling, phenomenological pH dynamics (acid load
proportional to gas rate, first-order recovery), and ideal-gas headspace
pressure with a relief ceiling. Integration is fixed-step explicit midpoint.

Units: time in days for kinetics and minutes for stepping, temperature in
degC, pressure in kPa gauge, gas volumes in litres at the plant's reference
pressure, substrate in grams of volatile solids (VS).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .telemetry import TelemetryRecord, TelemetryRun

E = math.e

FAST = "fast"
SLOW = "slow"

PACKAGED_SCENARIOS = ("lignocellulose", "food_waste")


class InputError(ValueError):
    """Bad step arguments (nonpositive dt, malformed schedule)."""


class StateError(ValueError):
    """Plant state violates its invariants."""


class ScenarioError(ValueError):
    """Malformed or missing scenario definition."""


@dataclass(frozen=True)
class SubstrateScenario:
    """Batch substrate description driving the gas kinetics.

    b0_*: ultimate gas yield per fraction (L/gVS); rm_*: peak specific rate
    (L/gVS/day); lambda_*: lag (days); vs_loaded: grams VS charged; t_opt /
    ph_opt: the conditions at which the rate response factors peak.
    """

    name: str
    b0_fast: float
    rm_fast: float
    lambda_fast: float
    b0_slow: float
    rm_slow: float
    lambda_slow: float
    vs_loaded: float
    t_opt: float
    ph_opt: float

    def __post_init__(self):
        for label in ("b0_fast", "rm_fast", "lambda_fast", "b0_slow", "rm_slow",
                      "lambda_slow", "vs_loaded"):
            if getattr(self, label) < 0:
                raise ScenarioError(f"{label} must be >= 0")
        if not (0.0 < self.ph_opt < 14.0):
            raise ScenarioError("ph_opt must be in (0, 14)")
        if not (0.0 < self.t_opt < 100.0):
            raise ScenarioError("t_opt must be in (0, 100) degC")


@dataclass(frozen=True)
class PlantParams:
    """Vessel constants: thermal, headspace, pH coupling, response widths."""

    ambient_temp: float = 22.0          # degC
    thermal_capacity: float = 2.16e4    # J/degC (tau = capacity/loss = 45 min)
    heat_loss: float = 8.0              # W/degC
    eta_still: float = 0.6              # heater coupling, unstirred
    eta_stirred: float = 0.85           # heater coupling, fully stirred
    eta_rpm_half: float = 20.0          # RPM at half of the stirring gain
    headspace_volume: float = 3.0       # L
    reference_pressure: float = 101.325  # kPa absolute, gas metering basis
    vent_threshold: float = 15.0        # kPa gauge relief ceiling
    vent_rate: float = 48.0             # 1/day first-order outflow when venting
    ph_relax_days: float = 2.0
    ph_acid_gain: float = 2.0           # pH pull per specific rate unit (L/gVS/day)
    ph_floor: float = 4.5
    temp_response_width: float = 6.0    # degC
    ph_response_width: float = 0.8
    level_loss_per_litre: float = 1e-4
    initial_level: float = 0.7


DEFAULT_PARAMS = PlantParams()


@dataclass(frozen=True)
class Actuators:
    heater_power: float = 0.0  # W
    stirrer_rpm: float = 0.0
    vent_open: bool = False


@dataclass(frozen=True)
class DigestorState:
    t_days: float = 0.0
    temperature: float = 22.0
    ph: float = 7.0
    pressure: float = 0.0        # kPa gauge
    gas_cumulative: float = 0.0  # L at reference conditions
    gas_rate: float = 0.0        # L/day
    heater_power: float = 0.0
    stirrer_rpm: float = 0.0
    level: float = 0.7


@dataclass(frozen=True)
class SensorModel:
    """Per-channel gaussian noise/bias and the sampling cadence."""

    sigmas: Mapping[str, float] = field(default_factory=dict)
    biases: Mapping[str, float] = field(default_factory=dict)
    sample_period_min: float = 15.0
    seed: int = 0

    def __post_init__(self):
        if self.sample_period_min <= 0:
            raise InputError("sample_period_min must be > 0")
        for ch, sigma in self.sigmas.items():
            if sigma < 0:
                raise InputError(f"sigma for {ch!r} must be >= 0")


NOISELESS_SENSORS = SensorModel()


def gompertz_cumulative(scenario: SubstrateScenario, fraction: str, t: float) -> float:
    """Cumulative specific yield (L/gVS) of one fraction at time t (days).

    Sigmoid with ultimate yield b0, peak rate rm and lag lam; b0 = 0 is the
    defined zero limit, never a division by zero.
    """
    b0, rm, lam = _fraction_params(scenario, fraction)
    if t < 0:
        raise InputError("t must be >= 0")
    if b0 == 0.0:
        return 0.0
    return b0 * math.exp(-math.exp(rm * E / b0 * (lam - t) + 1.0))


def gompertz_rate(scenario: SubstrateScenario, fraction: str, t: float) -> float:
    """Specific production rate (L/gVS/day) of one fraction at time t."""
    b0, rm, lam = _fraction_params(scenario, fraction)
    if b0 == 0.0:
        return 0.0
    u = rm * E / b0 * (lam - t) + 1.0
    # d/dt of the cumulative sigmoid; peaks at exactly rm when u = 0
    if u - math.exp(u) < -700.0:
        return 0.0
    return rm * E * math.exp(u - math.exp(u))


def _fraction_params(scenario: SubstrateScenario, fraction: str) -> tuple[float, float, float]:
    if fraction == FAST:
        return scenario.b0_fast, scenario.rm_fast, scenario.lambda_fast
    if fraction == SLOW:
        return scenario.b0_slow, scenario.rm_slow, scenario.lambda_slow
    raise InputError(f"unknown fraction {fraction!r}")


def temperature_factor(temperature: float, scenario: SubstrateScenario,
                       params: PlantParams = DEFAULT_PARAMS) -> float:
    """Rate response in [0, 1], peaking at t_opt."""
    z = (temperature - scenario.t_opt) / params.temp_response_width
    return math.exp(-z * z)


def ph_factor(ph: float, scenario: SubstrateScenario,
              params: PlantParams = DEFAULT_PARAMS) -> float:
    """Rate response in [0, 1], peaking at ph_opt."""
    z = (ph - scenario.ph_opt) / params.ph_response_width
    return math.exp(-z * z)


def potential_gas_rate(scenario: SubstrateScenario, t_days: float) -> float:
    """Total production rate (L/day) under peak-response conditions."""
    return scenario.vs_loaded * (
        gompertz_rate(scenario, FAST, t_days) + gompertz_rate(scenario, SLOW, t_days)
    )


def _heater_eta(rpm: float, params: PlantParams) -> float:
    gain = max(rpm, 0.0) / (max(rpm, 0.0) + params.eta_rpm_half)
    return params.eta_still + (params.eta_stirred - params.eta_still) * gain


def _derivatives(t_days, temperature, ph, pressure, actuators: Actuators,
                 scenario: SubstrateScenario, params: PlantParams,
                 hold_temperature, hold_ph):
    """Per-minute derivatives of (T, pH, pressure, gas) plus the gas rate."""
    eta = _heater_eta(actuators.stirrer_rpm, params)
    if hold_temperature is None:
        dT = (actuators.heater_power * eta
              - params.heat_loss * (temperature - params.ambient_temp)) * 60.0 / params.thermal_capacity
    else:
        dT = 0.0
    # specific rate (L/gVS/day): acidification is intensity-driven, so the
    # per-gram kinetics stay exactly linear in vs_loaded
    specific = ((gompertz_rate(scenario, FAST, t_days)
                 + gompertz_rate(scenario, SLOW, t_days))
                * temperature_factor(temperature, scenario, params)
                * ph_factor(ph, scenario, params))
    rate = scenario.vs_loaded * specific  # L/day
    if hold_ph is None:
        dph = ((scenario.ph_opt - ph) / params.ph_relax_days
               - params.ph_acid_gain * specific) / 1440.0
    else:
        dph = 0.0
    venting = actuators.vent_open or pressure >= params.vent_threshold
    dp = params.reference_pressure * rate / (params.headspace_volume * 1440.0)
    if venting:
        dp -= params.vent_rate / 1440.0 * pressure
    dgas = rate / 1440.0
    return dT, dph, dp, dgas, rate


def step_plant(state: DigestorState, scenario: SubstrateScenario, actuators: Actuators,
               dt_min: float, sensors: SensorModel | None = None,
               rng: np.random.Generator | None = None,
               params: PlantParams = DEFAULT_PARAMS,
               hold_temperature: float | None = None,
               hold_ph: float | None = None) -> tuple[DigestorState, list[TelemetryRecord]]:
    """Advance the plant one midpoint step of dt_min minutes.

    Returns the new state plus noisy sensor records when a SensorModel is
    given (one record per monitored channel). Multi-step callers should pass
    a persistent rng; otherwise a fresh one is derived from the sensor seed.
    """
    if dt_min <= 0:
        raise InputError("dt must be positive")
    _check_state(state, params)

    t0 = state.t_days
    T0, ph0, p0 = state.temperature, state.ph, state.pressure
    under = hold_temperature, hold_ph
    dT1, dph1, dp1, dgas1, _ = _derivatives(t0, T0, ph0, p0, actuators, scenario, params, *under)
    half = dt_min / 2.0
    t_mid = t0 + half / 1440.0
    dT2, dph2, dp2, dgas2, _ = _derivatives(
        t_mid, T0 + dT1 * half, ph0 + dph1 * half, p0 + dp1 * half,
        actuators, scenario, params, *under)

    t1 = t0 + dt_min / 1440.0
    temperature = hold_temperature if hold_temperature is not None else T0 + dT2 * dt_min
    ph = hold_ph if hold_ph is not None else max(ph0 + dph2 * dt_min, params.ph_floor)
    pressure = min(max(p0 + dp2 * dt_min, 0.0), params.vent_threshold)
    gas_cumulative = state.gas_cumulative + dgas2 * dt_min
    _, _, _, _, rate_end = _derivatives(t1, temperature, ph, pressure, actuators,
                                        scenario, params, *under)
    level = min(max(state.level - params.level_loss_per_litre * dgas2 * dt_min, 0.0), 1.0)

    new_state = DigestorState(
        t_days=t1,
        temperature=temperature,
        ph=ph,
        pressure=pressure,
        gas_cumulative=gas_cumulative,
        gas_rate=rate_end,
        heater_power=actuators.heater_power,
        stirrer_rpm=actuators.stirrer_rpm,
        level=level,
    )
    records: list[TelemetryRecord] = []
    if sensors is not None:
        if rng is None:
            rng = np.random.default_rng(sensors.seed)
        records = sample_sensors(new_state, sensors, rng)
    return new_state, records


def _check_state(state: DigestorState, params: PlantParams) -> None:
    if not (0.0 <= state.level <= 1.0):
        raise StateError(f"level {state.level} outside [0, 1]")
    if not (0.0 <= state.pressure <= params.vent_threshold + 1e-9):
        raise StateError(f"pressure {state.pressure} outside [0, vent threshold]")
    if state.gas_cumulative < 0.0:
        raise StateError("gas_cumulative must be >= 0")


def sample_sensors(state: DigestorState, sensors: SensorModel,
                   rng: np.random.Generator) -> list[TelemetryRecord]:
    """One noisy record per channel at the state's current time."""
    t_min = state.t_days * 1440.0
    truths = {
        "temperature": state.temperature,
        "ph": state.ph,
        "pressure": state.pressure,
        "gas_rate": state.gas_rate,
        "gas_cumulative": state.gas_cumulative,
        "level": state.level,
        "rpm": state.stirrer_rpm,
        "heater_power": state.heater_power,
    }
    records = []
    for channel, truth in truths.items():
        sigma = sensors.sigmas.get(channel, 0.0)
        bias = sensors.biases.get(channel, 0.0)
        value = truth + bias + (sigma * rng.standard_normal() if sigma > 0 else 0.0)
        records.append(TelemetryRecord(t_min, channel, value))
    return records


def initial_state(scenario: SubstrateScenario, params: PlantParams = DEFAULT_PARAMS) -> DigestorState:
    return DigestorState(
        t_days=0.0,
        temperature=params.ambient_temp,
        ph=scenario.ph_opt,
        pressure=0.0,
        gas_cumulative=0.0,
        gas_rate=0.0,
        heater_power=0.0,
        stirrer_rpm=0.0,
        level=params.initial_level,
    )


Schedule = Callable[[float, DigestorState], Actuators]


@dataclass
class ScenarioRun:
    """Full trajectory of one plant run: telemetry plus the true traces."""

    telemetry: TelemetryRun
    final_state: DigestorState
    times_min: np.ndarray
    temperature: np.ndarray
    ph: np.ndarray
    pressure: np.ndarray
    gas_rate: np.ndarray
    gas_cumulative: np.ndarray


def run_scenario(scenario: SubstrateScenario, schedule: Schedule | Actuators,
                 duration_days: float, dt_min: float = 15.0,
                 sensors: SensorModel = NOISELESS_SENSORS,
                 params: PlantParams = DEFAULT_PARAMS,
                 run_id: str = "scenario",
                 state: DigestorState | None = None,
                 hold_temperature: float | None = None,
                 hold_ph: float | None = None) -> ScenarioRun:
    """Iterate step_plant over the duration under an actuator schedule.

    The schedule is either a fixed Actuators value or a callable
    (t_min, state) -> Actuators evaluated before each step. Sensor records
    are appended whenever the sample period elapses (at step resolution).
    """
    if duration_days <= 0:
        raise InputError("duration must be positive")
    if isinstance(schedule, Actuators):
        fixed = schedule
        schedule = lambda t, s: fixed  # noqa: E731
    state = initial_state(scenario, params) if state is None else state
    rng = np.random.default_rng(sensors.seed)
    run = TelemetryRun(run_id)
    n_steps = int(round(duration_days * 1440.0 / dt_min))
    times = [state.t_days * 1440.0]
    trace = {key: [getattr(state, key)] for key in
             ("temperature", "ph", "pressure", "gas_rate", "gas_cumulative")}
    next_sample = sensors.sample_period_min
    t_offset = state.t_days * 1440.0
    for _ in range(n_steps):
        actuators = schedule(state.t_days * 1440.0, state)
        sample_due = (state.t_days * 1440.0 - t_offset) + dt_min >= next_sample - 1e-9
        state, records = step_plant(
            state, scenario, actuators, dt_min,
            sensors=sensors if sample_due else None, rng=rng, params=params,
            hold_temperature=hold_temperature, hold_ph=hold_ph)
        if sample_due:
            run.extend(records)
            next_sample += sensors.sample_period_min
        times.append(state.t_days * 1440.0)
        for key in trace:
            trace[key].append(getattr(state, key))
    return ScenarioRun(
        telemetry=run,
        final_state=state,
        times_min=np.array(times),
        temperature=np.array(trace["temperature"]),
        ph=np.array(trace["ph"]),
        pressure=np.array(trace["pressure"]),
        gas_rate=np.array(trace["gas_rate"]),
        gas_cumulative=np.array(trace["gas_cumulative"]),
    )


def run_ideal(scenario: SubstrateScenario, duration_days: float, dt_min: float = 15.0,
              params: PlantParams = DEFAULT_PARAMS) -> ScenarioRun:
    """Run with temperature and pH pinned at their optima (kinetics only)."""
    start = replace(initial_state(scenario, params),
                    temperature=scenario.t_opt, ph=scenario.ph_opt)
    return run_scenario(
        scenario, Actuators(vent_open=True), duration_days, dt_min,
        params=params, state=start,
        hold_temperature=scenario.t_opt, hold_ph=scenario.ph_opt)


def daily_gas_yields(times_min: np.ndarray, gas_cumulative: np.ndarray,
                     n_days: int) -> np.ndarray:
    """Gas produced per day bin [d-1, d) for d = 1..n_days, in litres."""
    boundaries = np.arange(n_days + 1) * 1440.0
    cum = np.interp(boundaries, times_min, gas_cumulative)
    return np.diff(cum)


# ---------------------------------------------------------------------------
# Scenario file handling


_SCENARIO_FIELDS = ("name", "b0_fast", "rm_fast", "lambda_fast", "b0_slow",
                    "rm_slow", "lambda_slow", "vs_loaded", "t_opt", "ph_opt")


def scenario_to_dict(scenario: SubstrateScenario) -> dict:
    return {key: getattr(scenario, key) for key in _SCENARIO_FIELDS}


def scenario_from_dict(raw: dict) -> SubstrateScenario:
    missing = [k for k in _SCENARIO_FIELDS if k not in raw]
    if missing:
        raise ScenarioError(f"scenario missing fields {missing}")
    kwargs = {k: raw[k] for k in _SCENARIO_FIELDS}
    kwargs["name"] = str(kwargs["name"])
    for k in _SCENARIO_FIELDS[1:]:
        kwargs[k] = float(kwargs[k])
    return SubstrateScenario(**kwargs)


def load_scenario(name_or_path: str | Path) -> SubstrateScenario:
    """Load a packaged scenario by name or any scenario JSON by path."""
    name = str(name_or_path)
    if name in PACKAGED_SCENARIOS:
        text = resources.files("wastetwin").joinpath(f"data/scenario_{name}.json").read_text()
        return scenario_from_dict(json.loads(text))
    path = Path(name_or_path)
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario file {path} is not valid JSON: {exc}") from exc
    if "base_scenario" in raw:
        return load_scenario_fragment(path)
    return scenario_from_dict(raw)


def load_scenario_fragment(path: str | Path) -> SubstrateScenario:
    """A fragment names a base scenario and overrides its substrate load."""
    path = Path(path)
    raw = json.loads(path.read_text())
    if "base_scenario" not in raw or "vs_loaded" not in raw:
        raise ScenarioError(f"fragment {path} needs base_scenario and vs_loaded")
    base = load_scenario(raw["base_scenario"])
    return replace(base, vs_loaded=float(raw["vs_loaded"]),
                   name=f"{base.name}+fragment")


def write_scenario_fragment(path: str | Path, base_scenario: str, vs_loaded: float,
                            provenance: str = "") -> None:
    payload = {"base_scenario": base_scenario, "vs_loaded": vs_loaded}
    if provenance:
        payload["provenance"] = provenance
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
