"""Fixed-step kernels shared by the trajectory simulators.

Every kernel works on a batch of ``B`` rows at once: ``x`` has shape ``(B, d)``
and the step size may be a scalar or a per-row array of shape ``(B,)``. The
vector field is called as ``field(states, x)`` with ``states`` of shape ``(B,)``.
"""
from __future__ import annotations

from typing import Callable, Tuple

import numpy as np

BatchField = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _column(h: float | np.ndarray) -> np.ndarray:
    return np.asarray(h, dtype=float).reshape(-1, 1) if np.ndim(h) else np.asarray(h, dtype=float)


def rk4_step(
    field: BatchField,
    states: np.ndarray,
    x: np.ndarray,
    h: float | np.ndarray,
    k1: np.ndarray | None = None,
) -> np.ndarray:
    """Advance ``x`` by one classical Runge-Kutta step of size ``h``.

    ``k1`` may be passed when the field at ``x`` is already known.
    """

    step = _column(h)
    if k1 is None:
        k1 = field(states, x)
    k2 = field(states, x + 0.5 * step * k1)
    k3 = field(states, x + 0.5 * step * k2)
    k4 = field(states, x + step * k3)
    return x + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def hermite_interpolate(
    x0: np.ndarray,
    f0: np.ndarray,
    x1: np.ndarray,
    f1: np.ndarray,
    h: float | np.ndarray,
    s: float | np.ndarray,
) -> np.ndarray:
    """Cubic Hermite value at fraction ``s`` of a step from ``(x0, f0)`` to ``(x1, f1)``."""

    step = _column(h)
    frac = _column(s)
    s2 = frac * frac
    s3 = s2 * frac
    h00 = 2.0 * s3 - 3.0 * s2 + 1.0
    h10 = s3 - 2.0 * s2 + frac
    h01 = -2.0 * s3 + 3.0 * s2
    h11 = s3 - s2
    return h00 * x0 + h10 * step * f0 + h01 * x1 + h11 * step * f1


SdeCoefficients = Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]


def heun_step(coefficients: SdeCoefficients, x: np.ndarray, dt: float, dW: np.ndarray) -> np.ndarray:
    """Stratonovich Heun predictor-corrector step.

    ``coefficients(x, dW)`` returns ``(a(x), b(x) dW)`` for each row with the
    diffusion increment already contracted, so the caller decides how Wiener
    components are shared between rows. With ``dW == 0`` this is the
    deterministic second-order Heun method.
    """

    a0, b0 = coefficients(x, dW)
    predictor = x + a0 * dt + b0
    a1, b1 = coefficients(predictor, dW)
    return x + 0.5 * (a0 + a1) * dt + 0.5 * (b0 + b1)


__all__ = ["BatchField", "SdeCoefficients", "hermite_interpolate", "heun_step", "rk4_step"]
