"""Limit cycle, phase resetting curve, and asymptotic phase of the averaged system.

The averaged flow is integrated with ``scipy.integrate.solve_ivp`` (DOP853 at
tight tolerances) and the cycle is located by iterating returns to a Poincare
section until both the return point and the return time settle. The cycle
is then sampled on a uniform phase grid; every other quantity (``Phi'``, the
Jacobian along the cycle, the adjoint solution) lives on the same grid.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, NamedTuple, Optional, Tuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from .dynamics import HybridModel, averaged_field, averaged_jacobian
from .errors import AdjointError, BasinError, EquilibriumError, NoCycleError
from .markov import GeneratorSpec

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
DEFAULT_GRID = 1024
ODE_RTOL = 1e-12
ODE_ATOL = 1e-12
FD_RELATIVE_STEP = 1e-6
ADJOINT_TOLERANCE = 1e-8
NORMALIZATION_DRIFT = 1e-4

VectorField = Callable[[np.ndarray], np.ndarray]
JacobianField = Callable[[np.ndarray], np.ndarray]


class AveragedSystem(NamedTuple):
    field: VectorField
    jacobian: Optional[JacobianField]


@dataclass(frozen=True)
class Section:
    """Hyperplane ``normal . (x - point) = 0`` crossed in the direction of ``normal``.

    Without a normal the section is oriented along the flow at ``point``.
    """

    point: np.ndarray
    normal: Optional[np.ndarray] = None


@dataclass(frozen=True)
class LimitCycle:
    period: float
    theta_grid: np.ndarray
    phi: np.ndarray
    phi_prime: np.ndarray
    jac: np.ndarray
    section: Section

    @property
    def frequency(self) -> float:
        return TWO_PI / self.period

    @property
    def grid_size(self) -> int:
        return int(self.theta_grid.shape[0])

    @cached_property
    def _phi_spline(self) -> CubicSpline:
        nodes = np.append(self.theta_grid, TWO_PI)
        values = np.vstack([self.phi, self.phi[:1]])
        return CubicSpline(nodes, values, bc_type="periodic", axis=0)

    @cached_property
    def _jac_spline(self) -> CubicSpline:
        nodes = np.append(self.theta_grid, TWO_PI)
        values = np.concatenate([self.jac, self.jac[:1]], axis=0)
        return CubicSpline(nodes, values, bc_type="periodic", axis=0)

    def interpolate(self, theta: np.ndarray | float) -> Tuple[np.ndarray, np.ndarray]:
        """Return ``(Phi(theta), Phi'(theta))`` by periodic cubic interpolation."""

        wrapped = np.mod(theta, TWO_PI)
        return self._phi_spline(wrapped), self._phi_spline(wrapped, 1)

    def jacobian_at(self, theta: np.ndarray | float) -> np.ndarray:
        return self._jac_spline(np.mod(theta, TWO_PI))


@dataclass(frozen=True)
class Prc:
    theta_grid: np.ndarray
    R: np.ndarray


# ----------------------------------------------------------------------
# Averaged system
# ----------------------------------------------------------------------
def averaged_system(model: HybridModel, spec: GeneratorSpec) -> AveragedSystem:
    """Return the averaged vector field and, when available, its Jacobian."""

    def field(x: np.ndarray) -> np.ndarray:
        return averaged_field(model, spec, x)

    jacobian: Optional[JacobianField] = None
    if model.jacobian is not None:

        def jacobian(x: np.ndarray) -> np.ndarray:
            return averaged_jacobian(model, spec, x)

    return AveragedSystem(field=field, jacobian=jacobian)


def finite_difference_jacobian(field: VectorField, x: np.ndarray) -> np.ndarray:
    """Central differences with step ``1e-6 * max(1, |x_k|)``; ``(K, d) -> (K, d, d)``."""

    points = np.atleast_2d(np.asarray(x, dtype=float))
    count, dim = points.shape
    jac = np.empty((count, dim, dim))
    for k in range(dim):
        step = FD_RELATIVE_STEP * np.maximum(1.0, np.abs(points[:, k]))
        shift = np.zeros_like(points)
        shift[:, k] = step
        jac[:, :, k] = (field(points + shift) - field(points - shift)) / (2.0 * step[:, None])
    return jac


# ----------------------------------------------------------------------
# Cycle detection
# ----------------------------------------------------------------------
def _flow(field: VectorField, y0: np.ndarray, duration: float, **kwargs):
    return solve_ivp(
        lambda _t, y: field(y),
        (0.0, duration),
        y0,
        method="DOP853",
        rtol=ODE_RTOL,
        atol=ODE_ATOL,
        **kwargs,
    )


def _flow_to(field: VectorField, y0: np.ndarray, duration: float) -> np.ndarray:
    solution = _flow(field, y0, duration)
    if not solution.success:
        raise NoCycleError(f"integration failed: {solution.message}")
    return solution.y[:, -1]


def _reject_stationary(field: VectorField, jacobian: Optional[JacobianField], point: np.ndarray) -> None:
    jac = jacobian(point) if jacobian is not None else finite_difference_jacobian(field, point)[0]
    singular = np.linalg.svd(np.atleast_2d(jac), compute_uv=False)
    if singular.min() < 1e-8 * max(1.0, singular.max()):
        raise NoCycleError(f"flow stalls on a continuum of rest points near {point.tolist()}")
    raise EquilibriumError(f"settled at {point.tolist()}")


def _next_return(
    field: VectorField,
    y0: np.ndarray,
    point: np.ndarray,
    normal: np.ndarray,
    window: float,
    nudge: float,
) -> Tuple[float, np.ndarray]:
    start = _flow_to(field, y0, nudge)

    def crossing(_t: float, y: np.ndarray) -> float:
        return float(np.dot(normal, y - point))

    crossing.terminal = True  # type: ignore[attr-defined]
    crossing.direction = 1.0  # type: ignore[attr-defined]
    solution = _flow(field, start, window, events=crossing)
    if not solution.success or solution.t_events[0].size == 0:
        raise NoCycleError(f"no return to the section within t={window:.6g}")
    return nudge + float(solution.t_events[0][0]), solution.y_events[0][0]


def find_limit_cycle(
    field: VectorField,
    x_guess: np.ndarray,
    grid_size: int = DEFAULT_GRID,
    tol: float = 1e-8,
    *,
    jacobian: Optional[JacobianField] = None,
    section: Optional[Section] = None,
    period_guess: Optional[float] = None,
    max_periods: int = 500,
) -> LimitCycle:
    """Locate the attracting cycle reached from ``x_guess`` and sample it.

    ``theta = 0`` sits where the cycle crosses the section. Raises
    :class:`EquilibriumError` when the flow settles on an isolated rest point
    and :class:`NoCycleError` when no periodic return is found.
    """

    if grid_size < 8:
        raise ValueError("grid_size must be at least 8")
    y = np.asarray(x_guess, dtype=float).copy()
    speed = float(np.linalg.norm(field(y)))
    if speed < tol:
        _reject_stationary(field, jacobian, y)
    scale_time = (1.0 + float(np.linalg.norm(y))) / speed
    settle = 10.0 * period_guess if period_guess else 50.0 * scale_time
    y = _flow_to(field, y, settle)
    speed = float(np.linalg.norm(field(y)))
    if speed < tol:
        _reject_stationary(field, jacobian, y)

    if section is None:
        section = Section(point=y.copy())
    point = np.asarray(section.point, dtype=float)
    normal = section.normal
    if normal is None:
        direction = field(point)
        norm = float(np.linalg.norm(direction))
        if norm < tol:
            _reject_stationary(field, jacobian, point)
        normal = direction / norm
    normal = np.asarray(normal, dtype=float)
    section = Section(point=point, normal=normal)

    nudge = 1e-4 * (1.0 + float(np.linalg.norm(y))) / speed
    window = 10.0 * period_guess if period_guess else 1000.0 * scale_time
    elapsed, y = _next_return(field, y, point, normal, window, nudge)
    previous_time: Optional[float] = None
    converged = False
    while True:
        period, returned = _next_return(field, y, point, normal, window, nudge)
        elapsed += period
        logger.debug("Section return after %.12g: %s", period, returned)
        close = float(np.linalg.norm(returned - y)) < tol
        steady = previous_time is not None and abs(period - previous_time) < tol * period
        y = returned
        previous_time = period
        window = 10.0 * period
        if close and steady:
            converged = True
            break
        if elapsed > max_periods * period:
            break
    if not converged:
        raise NoCycleError(f"returns did not settle within {max_periods} periods")

    omega = TWO_PI / period
    theta = np.arange(grid_size) * (TWO_PI / grid_size)
    sampled = _flow(field, y, period, t_eval=theta / omega, dense_output=False)
    if not sampled.success:
        raise NoCycleError(f"cycle sampling failed: {sampled.message}")
    phi = sampled.y.T.copy()
    phi_prime = field(phi) / omega
    jac = jacobian(phi) if jacobian is not None else finite_difference_jacobian(field, phi)
    logger.debug("Limit cycle with period %.12g on %s grid points", period, grid_size)
    return LimitCycle(
        period=period,
        theta_grid=theta,
        phi=phi,
        phi_prime=phi_prime,
        jac=np.asarray(jac).reshape(grid_size, phi.shape[1], phi.shape[1]),
        section=section,
    )


def model_limit_cycle(
    model: HybridModel,
    spec: GeneratorSpec,
    *,
    grid_size: int = DEFAULT_GRID,
    tol: float = 1e-8,
    x_guess: Optional[np.ndarray] = None,
    section: Optional[Section] = None,
) -> LimitCycle:
    """Averaged cycle of ``model``, anchored at its reference point when it publishes one."""

    system = averaged_system(model, spec)
    if section is None and model.reference_point is not None:
        section = Section(point=np.asarray(model.reference_point, dtype=float))
    if x_guess is None:
        if model.reference_point is None:
            raise ValueError(f"model {model.name!r} needs an explicit x_guess")
        x_guess = np.asarray(model.reference_point, dtype=float)
    return find_limit_cycle(
        system.field,
        x_guess,
        grid_size,
        tol,
        jacobian=system.jacobian,
        section=section,
        period_guess=model.period_hint,
    )


# ----------------------------------------------------------------------
# Adjoint
# ----------------------------------------------------------------------
def compute_prc(lc: LimitCycle, *, tol: float = ADJOINT_TOLERANCE, max_periods: int = 200) -> Prc:
    """Periodic solution of ``omega R' = -J^T R`` normalised by ``R . Phi' = 1``.

    The adjoint is swept backwards in phase with RK4 on the cycle grid, the
    Jacobian at half nodes coming from a periodic spline, until the value at
    ``theta = 0`` repeats to ``tol``.
    """

    count = lc.grid_size
    h = TWO_PI / count
    omega = lc.frequency
    nodes = lc.jac
    halves = lc.jacobian_at(lc.theta_grid + 0.5 * h)

    def slope(jac: np.ndarray, r: np.ndarray) -> np.ndarray:
        return -(jac.T @ r) / omega

    anchor = lc.phi_prime[0]
    r_start = anchor / float(anchor @ anchor)
    R = np.empty_like(lc.phi)
    for sweep in range(1, max_periods + 1):
        r = r_start
        for j in range(count - 1, -1, -1):
            upper = nodes[(j + 1) % count]
            k1 = slope(upper, r)
            k2 = slope(halves[j], r - 0.5 * h * k1)
            k3 = slope(halves[j], r - 0.5 * h * k2)
            k4 = slope(nodes[j], r - h * k3)
            r = r - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            R[j] = r
        r_next = r / float(r @ anchor)
        change = float(np.max(np.abs(r_next - r_start)))
        logger.debug("Adjoint sweep %s changed R(0) by %.3e", sweep, change)
        r_start = r_next
        if change < tol:
            break
    else:
        raise AdjointError(f"not periodic after {max_periods} backward periods")

    R = R / float(R[0] @ anchor)
    drift = float(np.max(np.abs(np.einsum("kd,kd->k", R, lc.phi_prime) - 1.0)))
    if drift > NORMALIZATION_DRIFT:
        raise AdjointError(f"normalization drift {drift:.3e}")
    return Prc(theta_grid=lc.theta_grid.copy(), R=R)


# ----------------------------------------------------------------------
# Asymptotic phase
# ----------------------------------------------------------------------
def _project(lc: LimitCycle, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    distances = np.linalg.norm(points[:, None, :] - lc.phi[None, :, :], axis=2)
    theta = lc.theta_grid[np.argmin(distances, axis=1)]
    for _ in range(50):
        phi, phi_prime = lc.interpolate(theta)
        correction = np.einsum("kd,kd->k", points - phi, phi_prime) / np.einsum(
            "kd,kd->k", phi_prime, phi_prime
        )
        theta = theta + correction
        if np.max(np.abs(correction)) < 1e-14:
            break
    phi, _ = lc.interpolate(theta)
    return np.mod(theta, TWO_PI), np.linalg.norm(points - phi, axis=1)


def isochronal_phase(
    lc: LimitCycle,
    field: VectorField,
    x: np.ndarray,
    tol: float = 1e-9,
    *,
    analytic_phase: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    max_periods: int = 200,
) -> np.ndarray | float:
    """Asymptotic phase of one point ``(d,)`` or a stack ``(K, d)``.

    With ``analytic_phase`` the closed form is shifted so that ``Phi(0)`` has
    phase zero. Otherwise the points are strobed by whole periods until they
    lie within ``tol`` of the cycle, then projected onto it.
    """

    points = np.asarray(x, dtype=float)
    single = points.ndim == 1
    stack = np.atleast_2d(points)
    if analytic_phase is not None:
        origin = float(analytic_phase(lc.phi[0]))
        values = np.mod(analytic_phase(stack) - origin, TWO_PI)
        return float(values[0]) if single else values

    count, dim = stack.shape

    def stacked(y: np.ndarray) -> np.ndarray:
        return field(y.reshape(count, dim)).ravel()

    for _ in range(max_periods + 1):
        theta, distance = _project(lc, stack)
        if np.all(distance < tol):
            return float(theta[0]) if single else theta
        try:
            stack = _flow_to(stacked, stack.ravel(), lc.period).reshape(count, dim)
        except NoCycleError as exc:
            raise BasinError(str(exc)) from exc
    raise BasinError(f"still {float(np.max(distance)):.3e} from the cycle after {max_periods} periods")


__all__ = [
    "AveragedSystem",
    "LimitCycle",
    "Prc",
    "Section",
    "averaged_system",
    "compute_prc",
    "find_limit_cycle",
    "finite_difference_jacobian",
    "isochronal_phase",
    "model_limit_cycle",
]
