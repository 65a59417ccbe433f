"""Bounded particle swarm minimizer with seeded, reproducible dynamics.

Standard global-best PSO over a box: velocities mix inertia with cognitive
and social attraction, positions are clamped to the box (the violating
velocity component is zeroed), and a single generator owned by the swarm is
advanced in particle-major order so runs are bit-reproducible per seed.
Maximization problems wrap their objective with a negation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

Objective = Callable[[np.ndarray], float]

TERMINATED_MAX_ITERATIONS = "max_iterations"
TERMINATED_STALL = "stall"
TERMINATED_TOLERANCE = "tolerance"


class ConfigurationError(ValueError):
    """Invalid swarm configuration or objective/bounds mismatch."""


class EvaluationError(RuntimeError):
    """Objective produced a non-finite value."""


class StateError(RuntimeError):
    """Swarm operation on an uninitialized state."""


@dataclass(frozen=True)
class PsoConfig:
    bounds: tuple[tuple[float, float], ...]
    swarm_size: int = 30
    inertia_weight: float = 0.729
    cognitive_coeff: float = 1.49445
    social_coeff: float = 1.49445
    max_iterations: int = 300
    velocity_clamp_fraction: float = 1.0
    seed: int = 0
    tolerance: float = 1e-12
    stall_iterations: int = 25
    stop_below_tolerance: bool = False  # opt-in early exit for known-zero-minimum objectives

    def __post_init__(self):
        object.__setattr__(
            self, "bounds", tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        )
        if self.swarm_size < 2:
            raise ConfigurationError("swarm_size must be >= 2")
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be >= 1")
        if not self.bounds:
            raise ConfigurationError("bounds must be non-empty")
        for i, (lo, hi) in enumerate(self.bounds):
            if not (lo < hi):
                raise ConfigurationError(f"bounds[{i}] must satisfy lower < upper, got ({lo}, {hi})")
        if min(self.inertia_weight, self.cognitive_coeff, self.social_coeff) < 0:
            raise ConfigurationError("w, c1, c2 must be non-negative")
        if not (0.0 < self.velocity_clamp_fraction <= 1.0):
            raise ConfigurationError("velocity_clamp_fraction must be in (0, 1]")
        if self.stall_iterations < 1:
            raise ConfigurationError("stall_iterations must be >= 1")

    @property
    def dimensions(self) -> int:
        return len(self.bounds)


@dataclass(frozen=True)
class Particle:
    position: np.ndarray
    velocity: np.ndarray
    personal_best_position: np.ndarray
    personal_best_value: float


@dataclass(frozen=True)
class OptimizationResult:
    best_position: np.ndarray
    best_value: float
    iterations_run: int
    convergence_trace: tuple[tuple[int, float], ...]
    terminated_by: str


class SwarmState:
    """Mutable swarm: positions, velocities, bests and the owned RNG stream."""

    def __init__(self, config: PsoConfig, objective: Objective):
        self.config = config
        self.objective = objective
        self.rng = np.random.default_rng(config.seed)
        self.iteration = 0
        lo = np.array([b[0] for b in config.bounds])
        hi = np.array([b[1] for b in config.bounds])
        self.lower, self.upper = lo, hi
        self.vmax = config.velocity_clamp_fraction * (hi - lo)
        shape = (config.swarm_size, config.dimensions)
        self.positions = lo + self.rng.random(shape) * (hi - lo)
        self.velocities = self.rng.uniform(-self.vmax, self.vmax, shape)
        values = self._evaluate(self.positions)
        self.pbest_positions = self.positions.copy()
        self.pbest_values = values
        i = int(np.argmin(values))
        self.gbest_position = self.positions[i].copy()
        self.gbest_value = float(values[i])
        self._initialized = True

    def _evaluate(self, positions: np.ndarray) -> np.ndarray:
        values = np.empty(len(positions))
        for i, x in enumerate(positions):
            try:
                v = float(self.objective(x))
            except EvaluationError:
                raise
            except Exception as exc:
                raise ConfigurationError(
                    f"objective rejected a {len(x)}-dimensional point: {exc}"
                ) from exc
            if not np.isfinite(v):
                raise EvaluationError(
                    f"objective returned non-finite value {v!r} at {x.tolist()}"
                )
            values[i] = v
        return values

    @property
    def particles(self) -> tuple[Particle, ...]:
        return tuple(
            Particle(
                self.positions[i].copy(),
                self.velocities[i].copy(),
                self.pbest_positions[i].copy(),
                float(self.pbest_values[i]),
            )
            for i in range(self.config.swarm_size)
        )


def init_swarm(config: PsoConfig, objective: Objective) -> SwarmState:
    """Uniformly sample the swarm inside bounds and record initial bests."""
    return SwarmState(config, objective)


def step(state: SwarmState) -> SwarmState:
    """Advance one iteration in place; returns the same state for chaining."""
    if not getattr(state, "_initialized", False):
        raise StateError("step on uninitialized swarm state")
    cfg = state.config
    shape = state.positions.shape
    r1 = state.rng.random(shape)
    r2 = state.rng.random(shape)
    state.velocities = (
        cfg.inertia_weight * state.velocities
        + cfg.cognitive_coeff * r1 * (state.pbest_positions - state.positions)
        + cfg.social_coeff * r2 * (state.gbest_position - state.positions)
    )
    np.clip(state.velocities, -state.vmax, state.vmax, out=state.velocities)
    moved = state.positions + state.velocities
    low_hit = moved < state.lower
    high_hit = moved > state.upper
    state.velocities[low_hit | high_hit] = 0.0
    state.positions = np.clip(moved, state.lower, state.upper)

    values = state._evaluate(state.positions)
    improved = values < state.pbest_values
    state.pbest_positions[improved] = state.positions[improved]
    state.pbest_values[improved] = values[improved]
    i = int(np.argmin(state.pbest_values))
    if state.pbest_values[i] < state.gbest_value:
        state.gbest_value = float(state.pbest_values[i])
        state.gbest_position = state.pbest_positions[i].copy()
    state.iteration += 1
    return state


def optimize(config: PsoConfig, objective: Objective) -> OptimizationResult:
    """Run the swarm until max_iterations, stall, or the tolerance floor.

    The trace records (iteration, best_value) starting at iteration 0
    (post-initialization best) and is non-increasing by construction.
    """
    try:
        state = init_swarm(config, objective)
    except EvaluationError as exc:
        raise EvaluationError(f"at initialization: {exc}") from exc
    trace = [(0, state.gbest_value)]
    terminated_by = TERMINATED_MAX_ITERATIONS
    stall_streak = 0
    for it in range(1, config.max_iterations + 1):
        previous = state.gbest_value
        try:
            step(state)
        except EvaluationError as exc:
            raise EvaluationError(f"at iteration {it}: {exc}") from exc
        trace.append((it, state.gbest_value))
        if config.stop_below_tolerance and state.gbest_value <= config.tolerance:
            terminated_by = TERMINATED_TOLERANCE
            break
        improvement = previous - state.gbest_value
        stall_streak = stall_streak + 1 if improvement < config.tolerance else 0
        if stall_streak >= config.stall_iterations:
            terminated_by = TERMINATED_STALL
            break
    return OptimizationResult(
        best_position=state.gbest_position.copy(),
        best_value=state.gbest_value,
        iterations_run=state.iteration,
        convergence_trace=tuple(trace),
        terminated_by=terminated_by,
    )


def write_trace_csv(result: OptimizationResult, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("iteration", "best_value"))
        for it, value in result.convergence_trace:
            writer.writerow((it, format(value, ".17g")))
