"""High-level helper that runs configured experiments and writes their artifacts."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import List, Tuple

import numpy as np

from hybrid.cycle import LimitCycle, Prc, averaged_system, compute_prc, isochronal_phase, model_limit_cycle
from hybrid.dynamics import (
    HybridModel,
    HybridTrajectory,
    JumpCountSummary,
    jump_count_summary,
    simulate_ensemble,
    simulate_pdmp,
    simulate_qss_ensemble,
)
from hybrid.errors import ChainError, ConfigError, ModelError
from hybrid.markov import GeneratorSpec, build_generator
from hybrid.models import (
    RicDriveParams,
    RicSwitchParams,
    deterministic_ric,
    dichotomous_additive,
    ric_drive_variant,
    ric_parameter_switching,
)
from hybrid.phase import (
    EmpiricalFit,
    LyapunovReport,
    PhaseCoupling,
    empirical_lyapunov,
    lyapunov_exact,
    lyapunov_qss,
    phase_coupling,
    phase_differences,
    phase_model,
)

from .models import DichotomousConfig, ExperimentConfig, RicDriveConfig, RicSwitchConfig
from .persistence import ConfigSerializer, ResultFileAdapter

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimulationResult:
    trajectory_path: Path
    events_path: Path
    jumps: JumpCountSummary | None
    trajectory: HybridTrajectory = field(repr=False)


@dataclass(frozen=True)
class CycleResult:
    path: Path
    period: float
    grid_size: int


@dataclass(frozen=True)
class SyncResult:
    report: LyapunovReport
    report_path: Path
    log_difference_path: Path | None = None


def build_model(config: ExperimentConfig) -> Tuple[HybridModel, GeneratorSpec]:
    """Instantiate the chain and hybrid model a config describes."""

    chain = build_generator(config.model.chain.W)
    settings = config.model
    if isinstance(settings, RicSwitchConfig):
        params = RicSwitchParams(mu=tuple(settings.mu), eta=tuple(settings.eta), alpha=settings.alpha)
        return ric_parameter_switching(params, chain), chain
    if isinstance(settings, RicDriveConfig):
        drive = RicDriveParams(
            mu=settings.mu,
            eta=settings.eta,
            alpha=settings.alpha,
            v=tuple(tuple(item) for item in settings.v),
            drive=settings.drive,
            center_drive=settings.center_drive,
            r_min=settings.r_min,
        )
        return ric_drive_variant(drive, chain), chain
    if isinstance(settings, DichotomousConfig):
        base = deterministic_ric(settings.base.mu, settings.base.eta, settings.base.alpha)
        return dichotomous_additive(base, settings.I0, settings.I1, chain), chain
    raise ConfigError(f"unsupported model config {type(settings).__name__}")  # pragma: no cover


def initial_points(config: ExperimentConfig) -> np.ndarray:
    """Cartesian starting points with per-oscillator radius and phase offsets."""

    initial = config.initial
    index = np.arange(initial.oscillators)
    radius = initial.radius + index * initial.radius_offset
    angle = initial.phase + index * initial.phase_offset
    return np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])


class ExperimentService:
    """Runs the simulate / prc / lyapunov / sync / qss-sim pipelines for one config."""

    def __init__(self, config: ExperimentConfig) -> None:
        self.config = config
        try:
            self.model, self.spec = build_model(config)
        except (ChainError, ModelError) as exc:
            raise ConfigError(str(exc)) from exc

    # ------------------------------------------------------------------
    # Shared analysis
    # ------------------------------------------------------------------
    @cached_property
    def cycle(self) -> Tuple[LimitCycle, Prc]:
        lc = model_limit_cycle(self.model, self.spec, grid_size=self.config.grid_size)
        prc = compute_prc(lc)
        logger.info("Averaged limit cycle: period %.12g", lc.period)
        return lc, prc

    @cached_property
    def coupling(self) -> PhaseCoupling:
        lc, prc = self.cycle
        return phase_coupling(self.model, self.spec, lc, prc)

    def theoretical_exponents(self) -> Tuple[float, float]:
        epsilon = self.config.epsilon
        exact = lyapunov_exact(self.coupling, self.spec, epsilon)
        qss = lyapunov_qss(self.coupling, self.spec, epsilon)
        logger.info("Exponents at eps=%g: exact %.10g, diffusion approximation %.10g", epsilon, exact, qss)
        return exact, qss

    def phases(self, paths: np.ndarray) -> np.ndarray:
        """Asymptotic phase of every sample of ``paths`` ``(..., d)``."""

        lc, _ = self.cycle
        system = averaged_system(self.model, self.spec)
        flat = paths.reshape(-1, paths.shape[-1])
        theta = isochronal_phase(lc, system.field, flat, analytic_phase=self.model.analytic_phase)
        return np.asarray(theta).reshape(paths.shape[:-1])

    def _config_document(self) -> dict:
        return ConfigSerializer.to_dict(self.config)

    def _require_pair(self) -> None:
        if self.config.initial.oscillators != 2:
            raise ConfigError("synchronisation runs need exactly two oscillators (initial.oscillators=2)")

    def _fit_phases(self, times: np.ndarray, theta: np.ndarray) -> Tuple[np.ndarray, EmpiricalFit]:
        """Fit on phases shaped ``(trials, 2, samples)``."""

        fit = empirical_lyapunov(times, theta[:, 0, :], theta[:, 1, :], self.config.fit_window)
        with np.errstate(divide="ignore"):
            log_differences = np.log(np.abs(phase_differences(theta[:, 0, :], theta[:, 1, :])))
        return log_differences, fit

    def _fit_pairs(self, trajectories: List[HybridTrajectory]) -> Tuple[np.ndarray, np.ndarray, EmpiricalFit]:
        times = trajectories[0].sample_times
        stacked = np.stack([trajectory.paths for trajectory in trajectories])
        log_differences, fit = self._fit_phases(times, self.phases(stacked))
        return times, log_differences, fit

    def _report(self, fit: EmpiricalFit | None, n_trials: int) -> LyapunovReport:
        exact, qss = self.theoretical_exponents()
        return LyapunovReport(
            epsilon=self.config.epsilon,
            lambda_exact=exact,
            lambda_qss=qss,
            lambda_empirical=fit.estimate if fit is not None else None,
            std_error=fit.std_error if fit is not None else None,
            n_trials=n_trials,
            fit_window=fit.fit_window if fit is not None else None,
            underflow_truncated=fit.underflow_truncated if fit is not None else False,
            config=self._config_document(),
        )

    # ------------------------------------------------------------------
    # Commands
    # ------------------------------------------------------------------
    def simulate(self, out_dir: Path) -> SimulationResult:
        config = self.config
        trajectory = simulate_pdmp(
            self.model,
            self.spec,
            initial_points(config),
            config.initial.state,
            config.epsilon,
            config.t_final,
            config.output_dt,
            config.seed,
        )
        adapter = ResultFileAdapter(out_dir)
        trajectory_path = adapter.write_trajectory(trajectory)
        events_path = adapter.write_events(trajectory.events)
        jumps = None
        if self.model.period_hint is not None:
            jumps = jump_count_summary(trajectory, self.spec, self.model.period_hint)
            logger.info(
                "Jumps per period: %.1f measured, %.1f predicted",
                jumps.measured_per_period,
                jumps.predicted_per_period,
            )
        return SimulationResult(
            trajectory_path=trajectory_path,
            events_path=events_path,
            jumps=jumps,
            trajectory=trajectory,
        )

    def prc(self, out_dir: Path) -> CycleResult:
        lc, prc = self.cycle
        path = ResultFileAdapter(out_dir).write_cycle(lc, prc)
        return CycleResult(path=path, period=lc.period, grid_size=lc.grid_size)

    def lyapunov(self, out_dir: Path) -> SyncResult:
        report = self._report(None, 0)
        path = ResultFileAdapter(out_dir).write_json(report.model_dump(mode="python"), "lyapunov.json")
        return SyncResult(report=report, report_path=path)

    def sync(self, out_dir: Path) -> SyncResult:
        self._require_pair()
        config = self.config
        trajectories = simulate_ensemble(
            self.model,
            self.spec,
            initial_points(config),
            config.initial.state,
            config.epsilon,
            config.t_final,
            config.output_dt,
            config.seed,
            config.n_trials,
            record_events=False,
            workers=config.workers,
        )
        logger.info("Finished %s hybrid trial(s)", len(trajectories))
        times, log_differences, fit = self._fit_pairs(trajectories)
        report = self._report(fit, config.n_trials)
        adapter = ResultFileAdapter(out_dir)
        report_path = adapter.write_json(report.model_dump(mode="python"), "sync.json")
        log_path = adapter.write_log_differences(times, log_differences)
        return SyncResult(report=report, report_path=report_path, log_difference_path=log_path)

    def qss_sim(self, out_dir: Path) -> SyncResult:
        """Diffusion-approximation pairs; ``qss_level`` picks the reduced phase or the planar model."""

        self._require_pair()
        config = self.config
        points = initial_points(config)
        if config.qss_level == "phase":
            model = phase_model(self.coupling)
            start = self.phases(points[None, :, :])[0].reshape(-1, 1)
        else:
            model = self.model
            start = points
        trajectories = simulate_qss_ensemble(
            model,
            self.spec,
            start,
            config.epsilon,
            config.t_final,
            config.resolved_qss_dt,
            config.seed,
            config.n_trials,
            output_dt=config.output_dt,
        )
        logger.info(
            "Finished %s %s-level diffusion-approximation trial(s)", len(trajectories), config.qss_level
        )
        times = trajectories[0].sample_times
        if config.qss_level == "phase":
            theta = np.stack([trajectory.paths[..., 0] for trajectory in trajectories])
            _, fit = self._fit_phases(times, theta)
        else:
            _, _, fit = self._fit_pairs(trajectories)
        report = self._report(fit, config.n_trials)
        path = ResultFileAdapter(out_dir).write_json(report.model_dump(mode="python"), "qss_sync.json")
        return SyncResult(report=report, report_path=path)


__all__ = [
    "CycleResult",
    "ExperimentService",
    "SimulationResult",
    "SyncResult",
    "build_model",
    "initial_points",
]
