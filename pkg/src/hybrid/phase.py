"""Phase reduction of the hybrid system and its Lyapunov exponents.

Projecting each fluctuation field onto the phase resetting curve gives the
phase couplings ``Fc_n(theta) = R(theta) . G_n(Phi(theta))``. Two theoretical
exponents follow from their derivatives: the exact one, which weights each
state by ``rho_n / lambda_n``, and the diffusion-approximation one, which
uses the symmetrised diffusion matrix. The empirical exponent is fitted to
log phase differences of simulated oscillator pairs.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy import stats
from scipy.interpolate import CubicSpline

from .cycle import LimitCycle, Prc
from .dynamics import (
    HybridModel,
    HybridTrajectory,
    fluctuation_matrix,
    simulate_ensemble,
    trial_generator,
)
from .errors import AnalysisError
from .formatting import precise_json
from .markov import EventLog, GeneratorSpec, sample_environment

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
QSS_POSITIVE_TOLERANCE = 1e-12
SPECTRAL_FILTER = 1e-13
UNDERFLOW_FLOOR = 1e-14
DEFAULT_FIT_WINDOW = (0.1, 0.9)


@dataclass(frozen=True)
class PhaseCoupling:
    """Phase couplings on the cycle grid: ``F_curly`` and its derivative, ``(states, N)``."""

    theta_grid: np.ndarray
    F_curly: np.ndarray
    F_curly_prime: np.ndarray
    frequency: float

    @property
    def num_states(self) -> int:
        return int(self.F_curly.shape[0])


class LyapunovReport(BaseModel):
    epsilon: float = Field(..., gt=0.0)
    lambda_exact: float = Field(..., le=0.0)
    lambda_qss: float = Field(..., le=0.0)
    lambda_empirical: Optional[float] = None
    std_error: Optional[float] = Field(None, ge=0.0)
    n_trials: int = Field(0, ge=0)
    fit_window: Optional[Tuple[float, float]] = None
    underflow_truncated: bool = False
    config: Optional[Dict[str, Any]] = None

    def to_json(self) -> str:
        """Serialise with 17 significant digits per float."""

        return precise_json(self.model_dump(mode="python"))


@dataclass(frozen=True)
class EmpiricalFit:
    estimate: float
    std_error: float
    fit_window: Tuple[float, float]
    underflow_truncated: bool
    per_trial: np.ndarray


@dataclass(frozen=True)
class JumpSumEstimate:
    """Monte-Carlo exponents built from sums over the sojourns of the environment."""

    lambda_exact: float
    lambda_exact_std_error: float
    lambda_qss: float
    lambda_qss_std_error: float
    n_trials: int


# ----------------------------------------------------------------------
# Phase couplings
# ----------------------------------------------------------------------
def spectral_derivative(samples: np.ndarray) -> np.ndarray:
    """Derivative of 2 pi-periodic samples along the last axis via FFT.

    Fourier modes below ``1e-13`` of the largest mode are dropped so that
    numerically constant rows differentiate to exact zeros.
    """

    count = samples.shape[-1]
    spectrum = np.fft.rfft(samples, axis=-1)
    magnitude = np.abs(spectrum)
    ceiling = np.max(magnitude, axis=-1, keepdims=True)
    spectrum = np.where(magnitude > SPECTRAL_FILTER * ceiling, spectrum, 0.0)
    wavenumbers = np.arange(spectrum.shape[-1], dtype=float)
    if count % 2 == 0:
        wavenumbers[-1] = 0.0
    return np.fft.irfft(1j * wavenumbers * spectrum, n=count, axis=-1)


def central_derivative(samples: np.ndarray) -> np.ndarray:
    """Second-order periodic central differences along the last axis."""

    h = TWO_PI / samples.shape[-1]
    return (np.roll(samples, -1, axis=-1) - np.roll(samples, 1, axis=-1)) / (2.0 * h)


def phase_coupling(
    model: HybridModel,
    spec: GeneratorSpec,
    lc: LimitCycle,
    prc: Prc,
    *,
    derivative: str = "spectral",
) -> PhaseCoupling:
    """Sample ``Fc_n(theta) = R(theta) . (F_n - Fbar)(Phi(theta))`` and its derivative."""

    if prc.theta_grid.shape != lc.theta_grid.shape or not np.allclose(
        prc.theta_grid, lc.theta_grid, rtol=0.0, atol=1e-12
    ):
        raise AnalysisError("grid mismatch between limit cycle and PRC")
    fluctuations = fluctuation_matrix(model, spec, lc.phi)
    couplings = np.einsum("kd,kdm->mk", prc.R, fluctuations)
    if derivative == "spectral":
        slopes = spectral_derivative(couplings)
    elif derivative == "central":
        slopes = central_derivative(couplings)
    else:
        raise ValueError(f"unknown derivative method {derivative!r}")
    return PhaseCoupling(
        theta_grid=lc.theta_grid.copy(),
        F_curly=couplings,
        F_curly_prime=slopes,
        frequency=lc.frequency,
    )


def _check_states(pc: PhaseCoupling, spec: GeneratorSpec) -> None:
    if pc.num_states != spec.num_states:
        raise AnalysisError(
            f"state-count mismatch: couplings have {pc.num_states} states, chain has {spec.num_states}"
        )


# ----------------------------------------------------------------------
# Theoretical exponents
# ----------------------------------------------------------------------
def lyapunov_qss(pc: PhaseCoupling, spec: GeneratorSpec, epsilon: float) -> float:
    """``epsilon * <Fc'^T A_tilde Fc'>`` averaged over the cycle."""

    _check_states(pc, spec)
    slopes = pc.F_curly_prime
    density = np.einsum("mk,mn,nk->k", slopes, spec.A_tilde, slopes)
    value = epsilon * float(np.mean(density))
    if value > QSS_POSITIVE_TOLERANCE:
        raise AnalysisError(f"QSS exponent positive: {value:.3e}")
    return min(value, 0.0)


def lyapunov_exact(pc: PhaseCoupling, spec: GeneratorSpec, epsilon: float) -> float:
    """``-epsilon * <sum_n rho_n / lambda_n Fc_n'^2>`` averaged over the cycle."""

    _check_states(pc, spec)
    rates = spec.exit_rates
    weights = np.where(rates > 0.0, spec.rho / np.where(rates > 0.0, rates, 1.0), 0.0)
    density = weights @ (pc.F_curly_prime**2)
    return -epsilon * float(np.mean(density))


# ----------------------------------------------------------------------
# Phase dynamics
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class PhaseField:
    """``d theta / dt = omega + Fc_n(theta)`` with periodic spline interpolation."""

    frequency: float
    spline: CubicSpline

    def __call__(self, states: np.ndarray, x: np.ndarray) -> np.ndarray:
        values = self.spline(np.mod(x[:, 0], TWO_PI))
        picked = np.take_along_axis(values, states[:, None].astype(np.int64), axis=1)
        return self.frequency + picked


def coupling_spline(theta_grid: np.ndarray, samples: np.ndarray) -> CubicSpline:
    nodes = np.append(theta_grid, TWO_PI)
    values = np.hstack([samples, samples[:, :1]]).T
    return CubicSpline(nodes, values, bc_type="periodic", axis=0)


def phase_model(pc: PhaseCoupling) -> HybridModel:
    """One-dimensional hybrid model of the reduced phase dynamics."""

    return HybridModel(
        dimension=1,
        num_states=pc.num_states,
        field=PhaseField(pc.frequency, coupling_spline(pc.theta_grid, pc.F_curly)),
        domain_bound=math.inf,
        period_hint=TWO_PI / pc.frequency,
        name="phase",
    )


def simulate_phase_ensemble(
    pc: PhaseCoupling,
    spec: GeneratorSpec,
    theta0: Sequence[float],
    n0: int,
    epsilon: float,
    t_final: float,
    output_dt: float,
    seed: int,
    n_trials: int = 1,
    *,
    step: float | None = None,
    workers: int = 1,
    record_events: bool = False,
    environments: Sequence[EventLog] | None = None,
) -> List[HybridTrajectory]:
    """Phase trajectories (unwrapped lifts) of ``len(theta0)`` oscillators per trial."""

    _check_states(pc, spec)
    start = np.asarray(theta0, dtype=float).reshape(-1, 1)
    return simulate_ensemble(
        phase_model(pc),
        spec,
        start,
        n0,
        epsilon,
        t_final,
        output_dt,
        seed,
        n_trials,
        step=step,
        record_events=record_events,
        workers=workers,
        environments=environments,
    )


def simulate_phase_pdmp(
    pc: PhaseCoupling,
    spec: GeneratorSpec,
    theta0: Sequence[float],
    n0: int,
    epsilon: float,
    t_final: float,
    output_dt: float,
    seed: int,
    *,
    step: float | None = None,
    environment: EventLog | None = None,
) -> HybridTrajectory:
    """Single-trial form of :func:`simulate_phase_ensemble`."""

    return simulate_phase_ensemble(
        pc,
        spec,
        theta0,
        n0,
        epsilon,
        t_final,
        output_dt,
        seed,
        1,
        step=step,
        record_events=True,
        environments=[environment] if environment is not None else None,
    )[0]


# ----------------------------------------------------------------------
# Empirical exponent
# ----------------------------------------------------------------------
def phase_differences(theta_a: np.ndarray, theta_b: np.ndarray) -> np.ndarray:
    """Continuous lift of ``theta_b - theta_a`` starting in ``(-pi, pi]``."""

    raw = np.asarray(theta_b, dtype=float) - np.asarray(theta_a, dtype=float)
    lifted = np.unwrap(raw, axis=-1)
    first = lifted[..., :1]
    wrapped = first - TWO_PI * np.ceil((first - math.pi) / TWO_PI)
    return lifted - (first - wrapped)


def _underflow_floor(theta_a: np.ndarray, theta_b: np.ndarray) -> np.ndarray:
    magnitude = np.maximum(np.abs(theta_a), np.abs(theta_b))
    return np.maximum(UNDERFLOW_FLOOR, 16.0 * np.spacing(magnitude))


def empirical_lyapunov(
    sample_times: np.ndarray,
    theta_a: np.ndarray,
    theta_b: np.ndarray,
    fit_window: Tuple[float, float] = DEFAULT_FIT_WINDOW,
) -> EmpiricalFit:
    """Least-squares slope of ``log |theta_b - theta_a|`` against time.

    ``theta_a``/``theta_b`` are ``(S,)`` for one pair or ``(trials, S)`` for an
    ensemble; ``fit_window`` holds fractions of the final sample time. When a
    difference falls below the resolvable floor before the window closes, the
    window is shrunk for every trial to end at the last resolvable sample and
    the result is flagged. Ensembles report the mean slope with its standard
    error across trials; a single pair reports the regression standard error.
    """

    times = np.asarray(sample_times, dtype=float)
    first = np.atleast_2d(np.asarray(theta_a, dtype=float))
    second = np.atleast_2d(np.asarray(theta_b, dtype=float))
    if first.shape != second.shape or first.shape[1] != times.shape[0]:
        raise AnalysisError("phase series and sample times disagree in shape")
    start_fraction, end_fraction = fit_window
    if not 0.0 <= start_fraction < end_fraction <= 1.0:
        raise AnalysisError(f"invalid fit window {fit_window}")

    differences = np.abs(phase_differences(first, second))
    if np.any(differences[:, 0] == 0.0):
        raise AnalysisError("degenerate fit input: initial phase difference is zero")

    horizon = times[-1]
    t_start = start_fraction * horizon
    t_end = end_fraction * horizon
    truncated = False
    resolvable = differences >= _underflow_floor(first, second)
    for row in resolvable:
        if not np.all(row):
            last_good = int(np.argmin(row)) - 1
            limit = times[max(last_good, 0)]
            if limit < t_end:
                t_end = limit
                truncated = True
    if truncated:
        t_start = min(t_start, (start_fraction / end_fraction) * t_end)
        logger.warning("Fit window truncated by phase-difference underflow at t=%.6g", t_end)

    inside = (times >= t_start) & (times <= t_end)
    if np.count_nonzero(inside) < 3:
        raise AnalysisError("degenerate fit input: fewer than three samples in the fit window")

    slopes = []
    errors = []
    for row in differences:
        fit = stats.linregress(times[inside], np.log(row[inside]))
        slopes.append(fit.slope)
        errors.append(fit.stderr)
    per_trial = np.asarray(slopes)
    if per_trial.shape[0] > 1:
        std_error = float(np.std(per_trial, ddof=1) / math.sqrt(per_trial.shape[0]))
    else:
        std_error = float(errors[0])
    return EmpiricalFit(
        estimate=float(np.mean(per_trial)),
        std_error=std_error,
        fit_window=(float(t_start), float(t_end)),
        underflow_truncated=truncated,
        per_trial=per_trial,
    )


def jump_sum_exponents(
    pc: PhaseCoupling,
    spec: GeneratorSpec,
    epsilon: float,
    t_final: float,
    n_trials: int,
    seed: int,
    *,
    n0: int = 0,
    theta0: float = 0.0,
) -> JumpSumEstimate:
    """Estimate both exponents from sums of ``Fc'_n(theta) * sojourn`` over environment paths.

    Along each path the phase is advanced at the mean frequency. The sum of
    squares over ``2 t`` tends to the exact exponent, the square of the sum to
    the diffusion-approximation one.
    """

    _check_states(pc, spec)
    if n_trials < 2:
        raise ValueError("at least two trials are needed for a standard error")
    spline = coupling_spline(pc.theta_grid, pc.F_curly_prime)
    squares = np.empty(n_trials)
    sums = np.empty(n_trials)
    for trial in range(n_trials):
        log = sample_environment(spec, n0, epsilon, t_final, trial_generator(seed, trial))
        entry_times = np.concatenate([[0.0], log.times])
        exit_times = np.concatenate([log.times, [t_final]])
        states = np.concatenate([[n0], log.to_states]).astype(np.int64)
        sojourns = exit_times - entry_times
        theta = np.mod(theta0 + pc.frequency * entry_times, TWO_PI)
        slopes = np.take_along_axis(spline(theta), states[:, None], axis=1)[:, 0]
        terms = slopes * sojourns
        squares[trial] = float(np.sum(terms**2))
        sums[trial] = float(np.sum(terms)) ** 2
    scale = -1.0 / (2.0 * t_final)
    root = math.sqrt(n_trials)
    return JumpSumEstimate(
        lambda_exact=scale * float(np.mean(squares)),
        lambda_exact_std_error=abs(scale) * float(np.std(squares, ddof=1)) / root,
        lambda_qss=scale * float(np.mean(sums)),
        lambda_qss_std_error=abs(scale) * float(np.std(sums, ddof=1)) / root,
        n_trials=n_trials,
    )


__all__ = [
    "DEFAULT_FIT_WINDOW",
    "EmpiricalFit",
    "JumpSumEstimate",
    "LyapunovReport",
    "PhaseCoupling",
    "PhaseField",
    "central_derivative",
    "coupling_spline",
    "empirical_lyapunov",
    "jump_sum_exponents",
    "lyapunov_exact",
    "lyapunov_qss",
    "phase_coupling",
    "phase_differences",
    "phase_model",
    "simulate_phase_ensemble",
    "simulate_phase_pdmp",
    "spectral_derivative",
]
