"""Built-in hybrid oscillator models.

The radial isochron clock is the normal form of a supercritical Hopf
oscillator,

    dx/dt = mu x - eta y - (x^2 + y^2)(x - alpha y)
    dy/dt = eta x + mu y - (x^2 + y^2)(alpha x + y)

with a stable cycle of radius ``sqrt(mu)``, frequency ``eta - alpha mu``, and
logarithmic-spiral isochrons ``atan2(y, x) - (alpha / 2) log(x^2 + y^2)``.
Three switching variants are registered here: switched ``(mu, eta)``, an added
switched drive vector, and a two-state additive input on any base model.

Every evaluator is a small frozen dataclass rather than a closure so models
can be shipped to worker processes.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .dynamics import HybridModel
from .errors import ModelError
from .markov import GeneratorSpec, build_generator

logger = logging.getLogger(__name__)

DRIVE_BALANCE_TOLERANCE = 1e-9
DRIVE_GEOMETRIES = ("cartesian", "radial")

BENCHMARK_RATES = (
    (0.0, 2.0, 2.5, 0.1),
    (1.0, 0.0, 0.5, 4.0),
    (0.5, 0.7, 0.0, 2.0),
    (3.0, 0.4, 0.25, 0.0),
)
BENCHMARK_DRIVES = ((2.0, -1.0), (-4.0, -4.0), (-3.0, 2.0), (8.8, 7.2))
DEFAULT_MU = 1.0
DEFAULT_ETA = 2.0
DEFAULT_ALPHA = 1.0


# ----------------------------------------------------------------------
# Parameter records
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class RicSwitchParams:
    """Per-state amplitude ``mu`` and frequency ``eta`` with a shared shear ``alpha``."""

    mu: Tuple[float, ...]
    eta: Tuple[float, ...]
    alpha: float = 0.0


@dataclass(frozen=True)
class RicDriveParams:
    """Fixed clock parameters plus one drive vector per environment state."""

    mu: float = DEFAULT_MU
    eta: float = DEFAULT_ETA
    alpha: float = DEFAULT_ALPHA
    v: Tuple[Tuple[float, float], ...] = BENCHMARK_DRIVES
    drive: str = "cartesian"
    center_drive: bool = False
    r_min: float = 1e-3


# ----------------------------------------------------------------------
# Evaluators
# ----------------------------------------------------------------------
def ric_field(x: np.ndarray, mu: np.ndarray | float, eta: np.ndarray | float, alpha: float) -> np.ndarray:
    """Clock vector field on ``(K, 2)`` points; ``mu``/``eta`` may be per-row arrays."""

    px, py = x[:, 0], x[:, 1]
    s = px * px + py * py
    return np.stack(
        [mu * px - eta * py - s * (px - alpha * py), eta * px + mu * py - s * (alpha * px + py)],
        axis=1,
    )


def ric_jacobian(x: np.ndarray, mu: np.ndarray | float, eta: np.ndarray | float, alpha: float) -> np.ndarray:
    px, py = x[:, 0], x[:, 1]
    s = px * px + py * py
    u = px - alpha * py
    w = alpha * px + py
    jac = np.empty((x.shape[0], 2, 2))
    jac[:, 0, 0] = mu - 2.0 * px * u - s
    jac[:, 0, 1] = -eta - 2.0 * py * u + alpha * s
    jac[:, 1, 0] = eta - 2.0 * px * w - alpha * s
    jac[:, 1, 1] = mu - 2.0 * py * w - s
    return jac


def ric_phase(x: np.ndarray, alpha: float) -> np.ndarray:
    """Asymptotic phase ``atan2(y, x) - (alpha / 2) log(x^2 + y^2)`` wrapped to ``[0, 2 pi)``."""

    points = np.asarray(x, dtype=float)
    px, py = points[..., 0], points[..., 1]
    theta = np.arctan2(py, px) - 0.5 * alpha * np.log(px * px + py * py)
    return np.mod(theta, 2.0 * math.pi)


@dataclass(frozen=True)
class RicSwitchField:
    mu: np.ndarray
    eta: np.ndarray
    alpha: float

    def __call__(self, states: np.ndarray, x: np.ndarray) -> np.ndarray:
        return ric_field(x, self.mu[states], self.eta[states], self.alpha)


@dataclass(frozen=True)
class RicSwitchJacobian:
    mu: np.ndarray
    eta: np.ndarray
    alpha: float

    def __call__(self, states: np.ndarray, x: np.ndarray) -> np.ndarray:
        return ric_jacobian(x, self.mu[states], self.eta[states], self.alpha)


@dataclass(frozen=True)
class RicDriveField:
    mu: float
    eta: float
    alpha: float
    v: np.ndarray
    radial: bool

    def __call__(self, states: np.ndarray, x: np.ndarray) -> np.ndarray:
        drive = self.v[states]
        if self.radial:
            radius = np.sqrt(np.sum(x * x, axis=1, keepdims=True))
            drive = drive * x / radius
        return ric_field(x, self.mu, self.eta, self.alpha) + drive


@dataclass(frozen=True)
class RicDriveJacobian:
    mu: float
    eta: float
    alpha: float
    v: np.ndarray
    radial: bool

    def __call__(self, states: np.ndarray, x: np.ndarray) -> np.ndarray:
        jac = ric_jacobian(x, self.mu, self.eta, self.alpha)
        if self.radial:
            px, py = x[:, 0], x[:, 1]
            r3 = np.power(px * px + py * py, 1.5)
            v1, v2 = self.v[states, 0], self.v[states, 1]
            jac[:, 0, 0] += v1 * py * py / r3
            jac[:, 0, 1] -= v1 * px * py / r3
            jac[:, 1, 0] -= v2 * px * py / r3
            jac[:, 1, 1] += v2 * px * px / r3
        return jac


@dataclass(frozen=True)
class AdditiveInputField:
    base: object
    inputs: np.ndarray

    def __call__(self, states: np.ndarray, x: np.ndarray) -> np.ndarray:
        return self.base(np.zeros_like(states), x) + self.inputs[states]


@dataclass(frozen=True)
class AdditiveInputJacobian:
    base: object

    def __call__(self, states: np.ndarray, x: np.ndarray) -> np.ndarray:
        return self.base(np.zeros_like(states), x)


@dataclass(frozen=True)
class RicPhase:
    alpha: float

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return ric_phase(x, self.alpha)


# ----------------------------------------------------------------------
# Registration
# ----------------------------------------------------------------------
def _cycle_metadata(mu_bar: float, eta_bar: float, alpha: float) -> tuple[float | None, np.ndarray]:
    if mu_bar <= 0.0:
        raise ModelError(f"no averaged limit cycle: averaged mu = {mu_bar:.6g} must be positive")
    omega = eta_bar - alpha * mu_bar
    period = 2.0 * math.pi / abs(omega) if omega != 0.0 else None
    return period, np.array([math.sqrt(mu_bar), 0.0])


def deterministic_ric(
    mu: float = DEFAULT_MU, eta: float = DEFAULT_ETA, alpha: float = DEFAULT_ALPHA
) -> HybridModel:
    """Single-state clock, the base of the additive-input model."""

    params = RicSwitchParams(mu=(mu,), eta=(eta,), alpha=alpha)
    return ric_parameter_switching(params, build_generator([[0.0]]))


def ric_parameter_switching(params: RicSwitchParams, spec: GeneratorSpec) -> HybridModel:
    """Clock whose amplitude and frequency both switch with the environment."""

    mu = np.asarray(params.mu, dtype=float)
    eta = np.asarray(params.eta, dtype=float)
    if mu.shape != (spec.num_states,) or eta.shape != (spec.num_states,):
        raise ModelError(
            f"state-count mismatch: expected {spec.num_states} values of mu and eta"
        )
    mu_bar = float(spec.rho @ mu)
    eta_bar = float(spec.rho @ eta)
    period, reference = _cycle_metadata(mu_bar, eta_bar, params.alpha)
    bound = 10.0 * max(1.0, math.sqrt(max(float(mu.max()), mu_bar)))
    return HybridModel(
        dimension=2,
        num_states=spec.num_states,
        field=RicSwitchField(mu, eta, float(params.alpha)),
        jacobian=RicSwitchJacobian(mu, eta, float(params.alpha)),
        analytic_phase=RicPhase(float(params.alpha)),
        domain_bound=bound,
        period_hint=period,
        reference_point=reference,
        name="ric_switch",
    )


def center_drives(v: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Subtract the stationary mean drive from every drive vector."""

    return v - (rho @ v)[None, :]


def ric_drive_variant(params: RicDriveParams, spec: GeneratorSpec) -> HybridModel:
    """Clock pushed by a switched drive vector ``v_n`` whose stationary mean is zero."""

    if params.drive not in DRIVE_GEOMETRIES:
        raise ModelError(f"unknown drive geometry {params.drive!r}; expected one of {DRIVE_GEOMETRIES}")
    v = np.asarray(params.v, dtype=float)
    if v.shape != (spec.num_states, 2):
        raise ModelError(f"state-count mismatch: expected {spec.num_states} drive vectors of length 2")
    imbalance = spec.rho @ v
    if np.max(np.abs(imbalance)) > DRIVE_BALANCE_TOLERANCE:
        if not params.center_drive:
            raise ModelError(
                f"drive vectors are not mean-zero: sum rho v = ({imbalance[0]:.3e}, {imbalance[1]:.3e})"
            )
        logger.warning(
            "Centering drive vectors: subtracting stationary mean (%.6g, %.6g)",
            imbalance[0],
            imbalance[1],
        )
        v = center_drives(v, spec.rho)
    period, reference = _cycle_metadata(params.mu, params.eta, params.alpha)
    if params.r_min < 0.0:
        raise ModelError("r_min must be nonnegative")
    radial = params.drive == "radial"
    strongest = float(np.max(np.linalg.norm(v, axis=1))) if v.size else 0.0
    bound = 10.0 * max(1.0, math.sqrt(params.mu), strongest ** (1.0 / 3.0))
    return HybridModel(
        dimension=2,
        num_states=spec.num_states,
        field=RicDriveField(params.mu, params.eta, params.alpha, v, radial),
        jacobian=RicDriveJacobian(params.mu, params.eta, params.alpha, v, radial),
        analytic_phase=RicPhase(float(params.alpha)),
        domain_bound=bound,
        origin_radius=params.r_min if radial else 0.0,
        period_hint=period,
        reference_point=reference,
        name="ric_drive",
    )


def dichotomous_additive(
    base: HybridModel,
    I0: Sequence[float],
    I1: Sequence[float],
    spec: GeneratorSpec,
) -> HybridModel:
    """Two-state model ``F_n(x) = base(x) + I_n`` on top of a single-state base model.

    The closed-form phase of the base survives only when the stationary mean
    input vanishes, since otherwise the averaged system is a shifted one.
    """

    if spec.num_states != 2:
        raise ModelError("dichotomous model needs a two-state chain")
    if base.num_states != 1:
        raise ModelError("dichotomous base must be a single-state model")
    inputs = np.array([I0, I1], dtype=float)
    if inputs.shape != (2, base.dimension):
        raise ModelError(f"inputs must be two vectors of length {base.dimension}")
    mean_input = spec.rho @ inputs
    balanced = bool(np.max(np.abs(mean_input)) <= DRIVE_BALANCE_TOLERANCE)
    strongest = float(np.max(np.linalg.norm(inputs, axis=1)))
    return HybridModel(
        dimension=base.dimension,
        num_states=2,
        field=AdditiveInputField(base.field, inputs),
        jacobian=AdditiveInputJacobian(base.jacobian) if base.jacobian is not None else None,
        analytic_phase=base.analytic_phase if balanced else None,
        domain_bound=base.domain_bound * (1.0 + strongest),
        origin_radius=base.origin_radius,
        period_hint=base.period_hint,
        reference_point=base.reference_point,
        name="dichotomous",
    )


# ----------------------------------------------------------------------
# Presets
# ----------------------------------------------------------------------
def benchmark_chain() -> GeneratorSpec:
    """The four-state environment used for the synchronisation benchmark."""

    return build_generator(BENCHMARK_RATES)


def benchmark_drive_params(**overrides) -> RicDriveParams:
    """Benchmark drive parameters with centering switched on.

    The stock drive vectors balance against the benchmark chain only to
    about 1e-2, so the preset projects them onto the mean-zero set.
    """

    values = dict(
        mu=DEFAULT_MU,
        eta=DEFAULT_ETA,
        alpha=DEFAULT_ALPHA,
        v=BENCHMARK_DRIVES,
        drive="cartesian",
        center_drive=True,
    )
    values.update(overrides)
    return RicDriveParams(**values)


__all__ = [
    "AdditiveInputField",
    "AdditiveInputJacobian",
    "BENCHMARK_DRIVES",
    "BENCHMARK_RATES",
    "DRIVE_GEOMETRIES",
    "RicDriveField",
    "RicDriveJacobian",
    "RicDriveParams",
    "RicPhase",
    "RicSwitchField",
    "RicSwitchJacobian",
    "RicSwitchParams",
    "benchmark_chain",
    "benchmark_drive_params",
    "center_drives",
    "deterministic_ric",
    "dichotomous_additive",
    "ric_drive_variant",
    "ric_field",
    "ric_jacobian",
    "ric_parameter_switching",
    "ric_phase",
]
