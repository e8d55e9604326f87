"""Trajectory simulation for oscillators driven by a shared switching environment.

Two simulators live here. :func:`simulate_ensemble` integrates the hybrid
system exactly: the environment path is sampled once per trial and every
oscillator of that trial follows it, integrating ``dx/dt = F_n(x)`` with RK4
between jumps. :func:`simulate_qss_ensemble` integrates the diffusion
approximation with a Stratonovich Heun scheme and common Wiener increments.

Trials are advanced in lock-step: all ``n_trials * M`` oscillators form one
batch of rows and each trial carries its own step size, so the inner loop is a
handful of numpy operations regardless of ensemble size.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .errors import (
    DomainEscapeError,
    FieldBlowupError,
    ModelError,
    OriginSingularityError,
)
from .integrators import BatchField, hermite_interpolate, heun_step, rk4_step
from .markov import EnvironmentStream, EventLog, GeneratorSpec

logger = logging.getLogger(__name__)

DEFAULT_PERIOD = 2.0 * math.pi
_GRID_SLACK = 1e-9


@dataclass(frozen=True)
class HybridModel:
    """Family of vector fields ``F_n`` indexed by the environment state.

    ``field(states, x)`` is evaluated on batches: ``states`` has shape ``(B,)``
    and ``x`` has shape ``(B, d)``. Optional pieces (Jacobian, closed-form
    isochron phase, period estimate, section point) let the cycle and phase
    layers skip numerical work when the model knows the answer.
    """

    dimension: int
    num_states: int
    field: BatchField
    domain_bound: float
    jacobian: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    analytic_phase: Optional[Callable[[np.ndarray], np.ndarray]] = None
    origin_radius: float = 0.0
    period_hint: Optional[float] = None
    reference_point: Optional[np.ndarray] = None
    name: str = "custom"

    def __post_init__(self) -> None:
        if self.dimension < 1:
            raise ModelError("model dimension must be positive")
        if self.num_states < 1:
            raise ModelError("model needs at least one environment state")
        if not self.domain_bound > 0.0:
            raise ModelError("domain_bound must be positive")
        if self.origin_radius < 0.0:
            raise ModelError("origin_radius must be nonnegative")

    def evaluate(self, state: int, x: np.ndarray) -> np.ndarray:
        """Evaluate ``F_state`` at one point or a stack of points."""

        points = np.atleast_2d(np.asarray(x, dtype=float))
        values = self.field(np.full(points.shape[0], state, dtype=np.int64), points)
        return values.reshape(np.shape(x))

    @classmethod
    def from_state_fields(
        cls,
        fields: Sequence[Callable[[np.ndarray], np.ndarray]],
        *,
        dimension: int,
        domain_bound: float,
        **options,
    ) -> "HybridModel":
        """Build a model from one callable per state, each mapping ``(K, d) -> (K, d)``."""

        return cls(
            dimension=dimension,
            num_states=len(fields),
            field=StateFieldTable(tuple(fields)),
            domain_bound=domain_bound,
            **options,
        )


@dataclass(frozen=True)
class StateFieldTable:
    """Batched dispatcher over per-state vector fields."""

    fields: tuple

    def __call__(self, states: np.ndarray, x: np.ndarray) -> np.ndarray:
        out = np.empty_like(x, dtype=float)
        for state in np.unique(states):
            mask = states == state
            out[mask] = self.fields[int(state)](x[mask])
        return out


@dataclass
class HybridTrajectory:
    """Sampled output of one trial.

    ``paths`` has shape ``(M, S, d)`` for ``M`` oscillators and ``S`` sample
    times. ``events`` is empty when event recording was switched off;
    ``jump_count`` is always kept.
    """

    sample_times: np.ndarray
    states_at_samples: np.ndarray
    paths: np.ndarray
    epsilon: float
    seed: int
    t_final: float
    trial: int = 0
    events: EventLog = field(default_factory=EventLog)
    jump_count: int = 0
    increments: Optional[np.ndarray] = None

    @property
    def num_oscillators(self) -> int:
        return int(self.paths.shape[0])


@dataclass(frozen=True)
class JumpCountSummary:
    """Measured against predicted number of environment switches per period."""

    measured_per_period: float
    predicted_per_period: float

    @property
    def ratio(self) -> float:
        return self.measured_per_period / self.predicted_per_period


# ----------------------------------------------------------------------
# Averaged and fluctuation fields
# ----------------------------------------------------------------------
def _check_pairing(model: HybridModel, spec: GeneratorSpec) -> None:
    if model.num_states != spec.num_states:
        raise ModelError(
            f"state-count mismatch: model has {model.num_states} states, chain has {spec.num_states}"
        )


def state_fields(model: HybridModel, x: np.ndarray) -> np.ndarray:
    """Stack ``F_n(x)`` for every state: ``(K, d) -> (K, d, num_states)``."""

    points = np.atleast_2d(np.asarray(x, dtype=float))
    count = points.shape[0]
    return np.stack(
        [model.field(np.full(count, n, dtype=np.int64), points) for n in range(model.num_states)],
        axis=-1,
    )


def averaged_field(model: HybridModel, spec: GeneratorSpec, x: np.ndarray) -> np.ndarray:
    """Return ``sum_n rho_n F_n(x)`` with the shape of ``x``."""

    _check_pairing(model, spec)
    values = state_fields(model, x) @ spec.rho
    return values.reshape(np.shape(x))


def averaged_jacobian(model: HybridModel, spec: GeneratorSpec, x: np.ndarray) -> np.ndarray:
    """Return ``sum_n rho_n DF_n(x)``; requires an analytic model Jacobian."""

    _check_pairing(model, spec)
    if model.jacobian is None:
        raise ModelError(f"model {model.name!r} has no analytic Jacobian")
    points = np.atleast_2d(np.asarray(x, dtype=float))
    count = points.shape[0]
    total = np.zeros((count, model.dimension, model.dimension))
    for n, weight in enumerate(spec.rho):
        total += weight * model.jacobian(np.full(count, n, dtype=np.int64), points)
    return total[0] if np.ndim(x) == 1 else total


def fluctuation_field(model: HybridModel, spec: GeneratorSpec, n: int, x: np.ndarray) -> np.ndarray:
    """``G_n(x) = F_n(x) - Fbar(x)``."""

    _check_pairing(model, spec)
    if not 0 <= n < model.num_states:
        raise ModelError(f"state {n} outside 0..{model.num_states - 1}")
    stacked = state_fields(model, x)
    values = stacked[..., n] - stacked @ spec.rho
    return values.reshape(np.shape(x))


def fluctuation_matrix(model: HybridModel, spec: GeneratorSpec, x: np.ndarray) -> np.ndarray:
    """All fluctuation fields at once: ``(K, d) -> (K, d, num_states)``."""

    _check_pairing(model, spec)
    stacked = state_fields(model, x)
    return stacked - (stacked @ spec.rho)[..., None]


# ----------------------------------------------------------------------
# Seeds and shared helpers
# ----------------------------------------------------------------------
def trial_generator(seed: int, trial: int) -> np.random.Generator:
    """Independent generator for ``trial`` derived from the master ``seed``."""

    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial,)))


def default_step(model: HybridModel, epsilon: float) -> float:
    """RK4 step ``min(epsilon / 4, period / 200)``."""

    period = model.period_hint or DEFAULT_PERIOD
    return min(epsilon / 4.0, period / 200.0)


def output_grid(t_final: float, output_dt: float) -> np.ndarray:
    if not output_dt > 0.0:
        raise ValueError("output_dt must be positive")
    if not t_final > 0.0:
        raise ValueError("t_final must be positive")
    count = int(math.floor(t_final / output_dt + _GRID_SLACK))
    return np.arange(count + 1) * output_dt


def _prepare_initial(model: HybridModel, x0: np.ndarray) -> np.ndarray:
    points = np.atleast_2d(np.asarray(x0, dtype=float))
    if points.shape[1] != model.dimension:
        raise ModelError(
            f"initial points have dimension {points.shape[1]}, model expects {model.dimension}"
        )
    return points


def _check_rows(model: HybridModel, x: np.ndarray, velocity: np.ndarray, times: np.ndarray) -> None:
    finite = np.all(np.isfinite(x), axis=1) & np.all(np.isfinite(velocity), axis=1)
    if not np.all(finite):
        raise FieldBlowupError(time=float(np.min(times[~finite])))
    norms = np.linalg.norm(x, axis=1)
    escaped = norms > model.domain_bound
    if np.any(escaped):
        raise DomainEscapeError(time=float(np.min(times[escaped])))
    if model.origin_radius > 0.0:
        collapsed = norms < model.origin_radius
        if np.any(collapsed):
            raise OriginSingularityError(time=float(np.min(times[collapsed])))


class _EventQueue:
    """Pending switches of one trial, drawn from a stream or replayed from a log."""

    def __init__(self, stream: EnvironmentStream | None = None, log: EventLog | None = None) -> None:
        self._stream = stream
        self._blocks: List[EventLog] = []
        self._block = log if log is not None else EventLog()
        self._index = 0
        self.consumed = 0
        if stream is not None:
            self._refill()

    def _refill(self) -> None:
        if self._block is not None and len(self._block):
            self._blocks.append(self._block)
        self._block = self._stream.next_chunk() if self._stream is not None else EventLog()
        self._index = 0

    @property
    def next_time(self) -> float:
        if self._index >= len(self._block):
            return math.inf
        return float(self._block.times[self._index])

    def pop(self) -> int:
        target = int(self._block.to_states[self._index])
        self._index += 1
        self.consumed += 1
        if self._index >= len(self._block) and self._stream is not None:
            self._refill()
        return target

    def consumed_log(self) -> EventLog:
        pieces = list(self._blocks)
        remaining = self.consumed - sum(len(block) for block in pieces)
        if remaining > 0:
            block = self._block
            pieces.append(
                EventLog(
                    times=block.times[:remaining],
                    from_states=block.from_states[:remaining],
                    to_states=block.to_states[:remaining],
                    waiting_times=block.waiting_times[:remaining],
                )
            )
        return EventLog.concatenate(pieces)


# ----------------------------------------------------------------------
# Exact hybrid simulation
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class _PdmpJob:
    model: HybridModel
    spec: GeneratorSpec
    x0: np.ndarray
    n0: int
    epsilon: float
    t_final: float
    output_dt: float
    seed: int
    trials: tuple
    step: float
    record_events: bool
    environments: Optional[tuple] = None


def _run_pdmp_job(job: _PdmpJob) -> List[HybridTrajectory]:
    model, x0 = job.model, job.x0
    trial_count = len(job.trials)
    oscillators, dim = x0.shape

    queues: List[_EventQueue] = []
    for slot, trial in enumerate(job.trials):
        if job.environments is not None:
            queues.append(_EventQueue(log=job.environments[slot]))
        else:
            stream = EnvironmentStream(job.spec, job.n0, job.epsilon, trial_generator(job.seed, trial))
            queues.append(_EventQueue(stream=stream))

    grid = output_grid(job.t_final, job.output_dt)
    samples = grid.shape[0]
    paths = np.empty((trial_count, oscillators, samples, dim))
    sampled_states = np.empty((trial_count, samples), dtype=np.int64)
    paths[:, :, 0, :] = x0[None, :, :]
    sampled_states[:, 0] = job.n0
    next_out = np.ones(trial_count, dtype=np.int64)

    trial_state = np.full(trial_count, job.n0, dtype=np.int64)
    row_states = np.repeat(trial_state, oscillators)
    x = np.tile(x0, (trial_count, 1))
    t = np.zeros(trial_count)
    next_jump = np.array([queue.next_time for queue in queues])
    velocity = model.field(row_states, x)
    _check_rows(model, x, velocity, np.zeros(x.shape[0]))

    offsets = np.arange(oscillators)
    while True:
        active = t < job.t_final
        if not np.any(active):
            break
        target = np.minimum(next_jump, job.t_final)
        remaining = target - t
        hit = active & (remaining <= job.step)
        h_trial = np.where(hit, remaining, np.where(active, job.step, 0.0))
        h_rows = np.repeat(h_trial, oscillators)

        x_new = rk4_step(model.field, row_states, x, h_rows, k1=velocity)
        t_new = np.where(hit, target, t + h_trial)
        velocity_new = model.field(row_states, x_new)
        _check_rows(model, x_new, velocity_new, np.repeat(t_new, oscillators))

        # Samples falling inside this step, interpolated before any switch.
        while True:
            pending = next_out < samples
            index = np.minimum(next_out, samples - 1)
            due = pending & active & (grid[index] <= t_new + _GRID_SLACK * job.output_dt)
            if not np.any(due):
                break
            trials = np.flatnonzero(due)
            at = index[trials]
            span = h_trial[trials]
            frac = np.where(span > 0.0, (grid[at] - t[trials]) / np.where(span > 0.0, span, 1.0), 1.0)
            frac = np.clip(frac, 0.0, 1.0)
            rows = (trials[:, None] * oscillators + offsets[None, :]).ravel()
            values = hermite_interpolate(
                x[rows],
                velocity[rows],
                x_new[rows],
                velocity_new[rows],
                np.repeat(span, oscillators),
                np.repeat(frac, oscillators),
            )
            paths[trials, :, at] = values.reshape(trials.shape[0], oscillators, dim)
            sampled_states[trials, at] = trial_state[trials]
            next_out[trials] += 1

        jumped = hit & (next_jump <= job.t_final)
        if np.any(jumped):
            for slot in np.flatnonzero(jumped):
                trial_state[slot] = queues[slot].pop()
                next_jump[slot] = queues[slot].next_time
            row_states = np.repeat(trial_state, oscillators)
            switched = np.repeat(jumped, oscillators)
            velocity_new[switched] = model.field(row_states[switched], x_new[switched])

        x, t, velocity = x_new, t_new, velocity_new

    results: List[HybridTrajectory] = []
    for slot, trial in enumerate(job.trials):
        queue = queues[slot]
        results.append(
            HybridTrajectory(
                sample_times=grid.copy(),
                states_at_samples=sampled_states[slot],
                paths=paths[slot],
                epsilon=job.epsilon,
                seed=job.seed,
                t_final=job.t_final,
                trial=int(trial),
                events=queue.consumed_log() if job.record_events else EventLog(),
                jump_count=queue.consumed,
            )
        )
    return results


def _split(trials: Sequence[int], workers: int) -> List[tuple]:
    chunks = np.array_split(np.asarray(trials, dtype=np.int64), max(1, min(workers, len(trials))))
    return [tuple(int(value) for value in chunk) for chunk in chunks if chunk.size]


def simulate_ensemble(
    model: HybridModel,
    spec: GeneratorSpec,
    x0: np.ndarray,
    n0: int,
    epsilon: float,
    t_final: float,
    output_dt: float,
    seed: int,
    n_trials: int = 1,
    *,
    step: float | None = None,
    record_events: bool = True,
    workers: int = 1,
    environments: Sequence[EventLog] | None = None,
) -> List[HybridTrajectory]:
    """Simulate ``n_trials`` independent environment paths, each shared by all of ``x0``.

    Trial ``k`` draws its environment from ``SeedSequence(seed, spawn_key=(k,))``
    so results do not depend on ``workers``. ``environments`` replays given
    event logs (one per trial) instead of sampling.
    """

    _check_pairing(model, spec)
    if not epsilon > 0.0:
        raise ValueError("epsilon must be positive")
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    if not 0 <= n0 < spec.num_states:
        raise ModelError(f"initial state {n0} outside 0..{spec.num_states - 1}")
    points = _prepare_initial(model, x0)
    h = step if step is not None else default_step(model, epsilon)
    if not h > 0.0:
        raise ValueError("step must be positive")
    if environments is not None and len(environments) != n_trials:
        raise ValueError("one environment log per trial is required")

    trials = list(range(n_trials))
    chunks = _split(trials, workers)
    jobs = [
        _PdmpJob(
            model=model,
            spec=spec,
            x0=points,
            n0=int(n0),
            epsilon=float(epsilon),
            t_final=float(t_final),
            output_dt=float(output_dt),
            seed=int(seed),
            trials=chunk,
            step=float(h),
            record_events=record_events,
            environments=tuple(environments[k] for k in chunk) if environments is not None else None,
        )
        for chunk in chunks
    ]
    logger.debug(
        "Simulating %s trial(s) x %s oscillator(s) to t=%s with step %.3g",
        n_trials,
        points.shape[0],
        t_final,
        h,
    )
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(_run_pdmp_job, jobs))
    else:
        batches = [_run_pdmp_job(job) for job in jobs]
    return [trajectory for batch in batches for trajectory in batch]


def simulate_pdmp(
    model: HybridModel,
    spec: GeneratorSpec,
    x0: np.ndarray,
    n0: int,
    epsilon: float,
    t_final: float,
    output_dt: float,
    seed: int,
    *,
    step: float | None = None,
    record_events: bool = True,
    environment: EventLog | None = None,
) -> HybridTrajectory:
    """Single-trial form of :func:`simulate_ensemble`."""

    return simulate_ensemble(
        model,
        spec,
        x0,
        n0,
        epsilon,
        t_final,
        output_dt,
        seed,
        1,
        step=step,
        record_events=record_events,
        environments=[environment] if environment is not None else None,
    )[0]


# ----------------------------------------------------------------------
# Diffusion approximation
# ----------------------------------------------------------------------
def simulate_qss_ensemble(
    model: HybridModel,
    spec: GeneratorSpec,
    x0: np.ndarray,
    epsilon: float,
    t_final: float,
    dt: float,
    seed: int,
    n_trials: int = 1,
    *,
    output_dt: float | None = None,
    record_increments: bool = False,
    block: int = 1024,
) -> List[HybridTrajectory]:
    """Integrate ``dX = Fbar dt + sqrt(2 eps) G B dW`` (Stratonovich) for every trial.

    The step is shrunk to ``t_final / ceil(t_final / dt)`` so the horizon is
    hit exactly; samples are taken every ``round(output_dt / step)`` steps.
    ``epsilon == 0`` gives the deterministic Heun integration of ``Fbar``.
    """

    _check_pairing(model, spec)
    if epsilon < 0.0:
        raise ValueError("epsilon must be nonnegative")
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    if epsilon > 0.0 and dt > epsilon:
        raise ValueError("dt must not exceed epsilon")
    if not t_final > 0.0:
        raise ValueError("t_final must be positive")
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    points = _prepare_initial(model, x0)
    oscillators, dim = points.shape
    states = spec.num_states

    steps = int(math.ceil(t_final / dt - _GRID_SLACK))
    h = t_final / steps
    stride = 1 if output_dt is None else max(1, int(round(output_dt / h)))
    sample_steps = np.arange(0, steps + 1, stride)
    samples = sample_steps.shape[0]

    rows = n_trials * oscillators
    x = np.tile(points, (n_trials, 1))
    paths = np.empty((n_trials, oscillators, samples, dim))
    paths[:, :, 0, :] = points[None, :, :]
    scale = math.sqrt(2.0 * epsilon)
    B = spec.B
    rho = spec.rho

    def coefficients(y: np.ndarray, dW_rows: np.ndarray):
        stacked = state_fields(model, y)
        drift = stacked @ rho
        if scale == 0.0:
            return drift, np.zeros_like(drift)
        fluctuation = stacked - drift[..., None]
        return drift, scale * np.einsum("kdm,mn,kn->kd", fluctuation, B, dW_rows)

    generators = [trial_generator(seed, trial) for trial in range(n_trials)]
    increments = np.zeros((n_trials, block, states))
    logs: List[List[np.ndarray]] = [[] for _ in range(n_trials)]
    root_h = math.sqrt(h)
    cursor = block
    sample_slot = 1
    for step_index in range(1, steps + 1):
        if scale > 0.0 and cursor == block:
            for trial, generator in enumerate(generators):
                increments[trial] = generator.standard_normal((block, states)) * root_h
                if record_increments:
                    logs[trial].append(increments[trial].copy())
            cursor = 0
        dW = increments[:, cursor, :] if scale > 0.0 else np.zeros((n_trials, states))
        cursor += 1
        x = heun_step(coefficients, x, h, np.repeat(dW, oscillators, axis=0))
        now = step_index * h
        _check_rows(model, x, np.zeros_like(x), np.full(rows, now))
        if sample_slot < samples and sample_steps[sample_slot] == step_index:
            paths[:, :, sample_slot, :] = x.reshape(n_trials, oscillators, dim)
            sample_slot += 1

    sample_times = sample_steps * h
    results: List[HybridTrajectory] = []
    for trial in range(n_trials):
        recorded = None
        if record_increments:
            recorded = (
                np.concatenate(logs[trial])[:steps] if logs[trial] else np.zeros((steps, states))
            )
        results.append(
            HybridTrajectory(
                sample_times=sample_times.copy(),
                states_at_samples=np.zeros(0, dtype=np.int64),
                paths=paths[trial],
                epsilon=float(epsilon),
                seed=int(seed),
                t_final=float(t_final),
                trial=trial,
                increments=recorded,
            )
        )
    return results


def simulate_qss_sde(
    model: HybridModel,
    spec: GeneratorSpec,
    x0: np.ndarray,
    epsilon: float,
    t_final: float,
    dt: float,
    seed: int,
    *,
    output_dt: float | None = None,
    record_increments: bool = False,
) -> HybridTrajectory:
    """Single-trial form of :func:`simulate_qss_ensemble`."""

    return simulate_qss_ensemble(
        model,
        spec,
        x0,
        epsilon,
        t_final,
        dt,
        seed,
        1,
        output_dt=output_dt,
        record_increments=record_increments,
    )[0]


# ----------------------------------------------------------------------
# Diagnostics
# ----------------------------------------------------------------------
def jump_count_summary(
    trajectory: HybridTrajectory, spec: GeneratorSpec, period: float
) -> JumpCountSummary:
    """Compare observed switches per period with ``(period / eps) * sum(rho * lambda)``."""

    periods = trajectory.t_final / period
    return JumpCountSummary(
        measured_per_period=trajectory.jump_count / periods,
        predicted_per_period=period * spec.mean_exit_rate() / trajectory.epsilon,
    )


__all__ = [
    "HybridModel",
    "HybridTrajectory",
    "JumpCountSummary",
    "StateFieldTable",
    "averaged_field",
    "averaged_jacobian",
    "default_step",
    "fluctuation_field",
    "fluctuation_matrix",
    "jump_count_summary",
    "output_grid",
    "simulate_ensemble",
    "simulate_pdmp",
    "simulate_qss_ensemble",
    "simulate_qss_sde",
    "state_fields",
    "trial_generator",
]
