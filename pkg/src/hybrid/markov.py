"""Finite-state continuous-time Markov chain algebra for switching environments.

The chain is described by a rate matrix ``W`` whose entry ``W[n, m]`` is the
rate of the transition ``m -> n`` (columns are source states). Everything the
rest of the toolkit needs is derived once in :func:`build_generator` and kept
on an immutable :class:`GeneratorSpec`: the generator ``A``, the stationary
distribution, the embedded jump chain ``(P, exit_rates)``, the Moore-Penrose
pseudo-inverse, and the symmetrised diffusion matrix with its square root.

The fast time scale ``epsilon`` never lives on the generator; it is supplied when
jumps are sampled so one chain can serve a whole epsilon sweep.
"""
from __future__ import annotations

import bisect
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterator, List, Sequence, Tuple

import numpy as np
from scipy import linalg

from .errors import ChainError

logger = logging.getLogger(__name__)

PINV_RELATIVE_CUTOFF = 1e-12
EIGEN_CLAMP = 1e-12
PSD_TOLERANCE = 1e-10
MEAN_ZERO_TOLERANCE = 1e-10
_TINY = np.finfo(float).tiny


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class GeneratorSpec:
    """Validated chain together with every derived matrix used downstream."""

    W: np.ndarray
    A: np.ndarray
    rho: np.ndarray
    exit_rates: np.ndarray
    P: np.ndarray
    A_dagger: np.ndarray
    A_tilde: np.ndarray
    A_tilde_definitional: np.ndarray
    B: np.ndarray
    jump_cdf: Tuple[Tuple[float, ...], ...] = field(repr=False)

    @property
    def num_states(self) -> int:
        return int(self.W.shape[0])

    def mean_exit_rate(self) -> float:
        """Return ``sum_n rho_n lambda_n``, the jump rate of the unscaled chain."""

        return float(np.dot(self.rho, self.exit_rates))

    def to_document(self) -> dict[str, list[list[float]]]:
        """Return the ``{"W": ...}`` JSON document this spec was built from."""

        return {"W": self.W.tolist()}


@dataclass(frozen=True)
class JumpEvent:
    """One switch of the environment."""

    time: float
    from_state: int
    to_state: int
    waiting_time: float


@dataclass
class EventLog:
    """Column store of jump events, iterable as :class:`JumpEvent` records."""

    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    from_states: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    to_states: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    waiting_times: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self) -> int:
        return int(self.times.shape[0])

    def __iter__(self) -> Iterator[JumpEvent]:
        for idx in range(len(self)):
            yield self[idx]

    def __getitem__(self, idx: int) -> JumpEvent:
        return JumpEvent(
            time=float(self.times[idx]),
            from_state=int(self.from_states[idx]),
            to_state=int(self.to_states[idx]),
            waiting_time=float(self.waiting_times[idx]),
        )

    @classmethod
    def concatenate(cls, logs: Sequence["EventLog"]) -> "EventLog":
        if not logs:
            return cls()
        return cls(
            times=np.concatenate([log.times for log in logs]),
            from_states=np.concatenate([log.from_states for log in logs]),
            to_states=np.concatenate([log.to_states for log in logs]),
            waiting_times=np.concatenate([log.waiting_times for log in logs]),
        )

    def state_at(self, times: np.ndarray, initial_state: int) -> np.ndarray:
        """Return the piecewise-constant environment state at each requested time."""

        states = np.concatenate([[initial_state], self.to_states]).astype(int)
        index = np.searchsorted(self.times, np.asarray(times, dtype=float), side="right")
        return states[index]


# ----------------------------------------------------------------------
# Construction
# ----------------------------------------------------------------------
def _reachable(adjacency: np.ndarray, start: int) -> set[int]:
    seen = {start}
    queue: deque[int] = deque([start])
    while queue:
        node = queue.popleft()
        for target in np.flatnonzero(adjacency[node]):
            target = int(target)
            if target not in seen:
                seen.add(target)
                queue.append(target)
    return seen


def _validate_rates(W: np.ndarray) -> None:
    if W.ndim != 2 or W.shape[0] != W.shape[1] or W.shape[0] == 0:
        raise ChainError(f"invalid rate matrix: expected a non-empty square matrix, got {W.shape}")
    if not np.all(np.isfinite(W)):
        raise ChainError("invalid rate: non-finite entry")
    if np.any(W < 0.0):
        raise ChainError("invalid rate: negative transition rate")
    if np.any(np.diag(W) != 0.0):
        raise ChainError("invalid rate: diagonal entries must be zero")


def _check_irreducible(W: np.ndarray) -> None:
    # Edge m -> n whenever W[n, m] > 0.
    forward = W.T > 0.0
    count = W.shape[0]
    if len(_reachable(forward, 0)) != count or len(_reachable(forward.T, 0)) != count:
        raise ChainError("not irreducible: some states cannot reach each other")


def _stationary_distribution(A: np.ndarray) -> np.ndarray:
    count = A.shape[0]
    augmented = np.vstack([A, np.ones((1, count))])
    rhs = np.zeros(count + 1)
    rhs[-1] = 1.0
    rho, *_ = linalg.lstsq(augmented, rhs)
    if np.any(rho <= 0.0):
        raise ChainError("not irreducible: stationary distribution has empty states")
    return rho / rho.sum()


def build_generator(W: Sequence[Sequence[float]] | np.ndarray) -> GeneratorSpec:
    """Validate ``W`` and derive the complete :class:`GeneratorSpec`.

    Raises :class:`ChainError` with "invalid rate" for negative, non-finite, or
    diagonal entries, "absorbing state" when a state has no exit, and
    "not irreducible" when some state cannot reach another. A single-state
    chain is accepted as the trivial (never switching) environment.
    """

    rates = np.array(W, dtype=float)
    _validate_rates(rates)
    count = rates.shape[0]
    exit_rates = rates.sum(axis=0)

    if count == 1:
        zero = np.zeros((1, 1))
        return GeneratorSpec(
            W=_frozen(rates),
            A=_frozen(zero),
            rho=_frozen(np.ones(1)),
            exit_rates=_frozen(exit_rates),
            P=_frozen(zero),
            A_dagger=_frozen(zero),
            A_tilde=_frozen(zero),
            A_tilde_definitional=_frozen(zero),
            B=_frozen(zero),
            jump_cdf=((1.0,),),
        )

    absorbing = np.flatnonzero(exit_rates <= 0.0)
    if absorbing.size:
        raise ChainError(f"absorbing state: state(s) {absorbing.tolist()} have no exit rate")
    _check_irreducible(rates)

    generator = rates - np.diag(exit_rates)
    rho = _stationary_distribution(generator)
    P, _ = _decompose(rates, exit_rates)
    A_dagger = pseudo_inverse(generator)
    definitional = symmetrized_diffusion(A_dagger, rho)
    A_tilde, B = _gauge_fixed_root(definitional, rho)

    cdf_rows: List[Tuple[float, ...]] = []
    for source in range(count):
        cumulative = np.cumsum(P[:, source])
        cumulative /= cumulative[-1]
        cdf_rows.append(tuple(float(value) for value in cumulative))

    spec = GeneratorSpec(
        W=_frozen(rates),
        A=_frozen(generator),
        rho=_frozen(rho),
        exit_rates=_frozen(exit_rates),
        P=_frozen(P),
        A_dagger=_frozen(A_dagger),
        A_tilde=_frozen(A_tilde),
        A_tilde_definitional=_frozen(definitional),
        B=_frozen(B),
        jump_cdf=tuple(cdf_rows),
    )
    logger.debug("Built %s-state generator with rho=%s", count, spec.rho)
    return spec


# ----------------------------------------------------------------------
# Algebra
# ----------------------------------------------------------------------
def _decompose(W: np.ndarray, exit_rates: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    P = W / exit_rates[None, :]
    np.fill_diagonal(P, 0.0)
    return P, exit_rates.copy()


def decompose_transitions(spec: GeneratorSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Return ``(P, exit_rates)`` with ``W[n, m] = P[n, m] * exit_rates[m]``."""

    return spec.P.copy(), spec.exit_rates.copy()


def pseudo_inverse(A: np.ndarray) -> np.ndarray:
    """Moore-Penrose pseudo-inverse of a generator via SVD.

    Singular values below ``1e-12 * sigma_max`` count as zero; an irreducible
    chain has exactly one, so more than one raises "generator rank deficient".
    """

    matrix = np.asarray(A, dtype=float)
    U, sigma, Vt = linalg.svd(matrix)
    sigma_max = float(sigma.max()) if sigma.size else 0.0
    if sigma_max == 0.0:
        return np.zeros_like(matrix.T)
    keep = sigma >= PINV_RELATIVE_CUTOFF * sigma_max
    zero_count = int(np.count_nonzero(~keep))
    if zero_count > 1:
        raise ChainError(
            f"generator rank deficient: {zero_count} near-zero singular values"
        )
    inverted = np.where(keep, 1.0 / np.where(keep, sigma, 1.0), 0.0)
    return (Vt.T * inverted) @ U.T


def symmetrized_diffusion(A_dagger: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """``0.5 * (A_dagger[m, n] rho[n] + A_dagger[n, m] rho[m])``."""

    weighted = A_dagger * rho[None, :]
    return 0.5 * (weighted + weighted.T)


def _gauge_fixed_root(definitional: np.ndarray, rho: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    count = rho.shape[0]
    # Projector onto sum_n rho_n g_n = 0 along the constant vector.
    projector = np.eye(count) - np.outer(np.ones(count), rho)
    A_tilde = projector.T @ definitional @ projector
    A_tilde = 0.5 * (A_tilde + A_tilde.T)

    eigenvalues, eigenvectors = linalg.eigh(-A_tilde)
    if np.any(eigenvalues < -PSD_TOLERANCE):
        raise ChainError(
            f"diffusion matrix not PSD: smallest eigenvalue {eigenvalues.min():.3e}"
        )
    eigenvalues = np.where(np.abs(eigenvalues) < EIGEN_CLAMP, 0.0, eigenvalues)
    eigenvalues = np.maximum(eigenvalues, 0.0)
    B = eigenvectors * np.sqrt(eigenvalues)[None, :]
    return A_tilde, B


def diffusion_matrix(spec: GeneratorSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Return ``(A_tilde, B)`` with ``B @ B.T == -A_tilde``.

    ``A_tilde`` is the symmetrised diffusion matrix restricted to the
    rho-mean-zero subspace (the only subspace the fluctuation fields span);
    it agrees with :attr:`GeneratorSpec.A_tilde_definitional` as a quadratic
    form there and is negative semi-definite everywhere.
    """

    return spec.A_tilde.copy(), spec.B.copy()


def expected_jump_rate(spec: GeneratorSpec, epsilon: float) -> float:
    """Mean number of environment switches per unit time at time scale ``epsilon``."""

    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    return spec.mean_exit_rate() / epsilon


def series_identity_residual(spec: GeneratorSpec, f: Sequence[float], R: int) -> float:
    """Residual of the truncated jump-chain series identity.

    Returns ``max |-A diag(lambda)^-1 (sum_{j<=R} P^j) diag(rho) f - diag(rho) f|``,
    which equals ``max |P^(R+1) diag(rho) f|`` and decays geometrically with the
    second eigenvalue of ``P`` when the embedded chain is aperiodic.
    """

    values = np.asarray(f, dtype=float)
    if values.shape != (spec.num_states,):
        raise ChainError(f"test vector must have length {spec.num_states}")
    if R < 0:
        raise ValueError("truncation order must be nonnegative")
    scale = max(1.0, float(np.max(np.abs(values))) if values.size else 1.0)
    if abs(float(np.dot(spec.rho, values))) > MEAN_ZERO_TOLERANCE * scale:
        raise ChainError("test vector not mean-zero")
    if spec.num_states == 1:
        return 0.0

    weighted = spec.rho * values
    term = weighted.copy()
    partial = weighted.copy()
    for _ in range(R):
        term = spec.P @ term
        partial += term
    image = -spec.A @ (partial / spec.exit_rates)
    return float(np.max(np.abs(image - weighted)))


# ----------------------------------------------------------------------
# Sampling
# ----------------------------------------------------------------------
def _waiting_from_uniform(uniform: float | np.ndarray, scale: float | np.ndarray):
    return np.maximum(-scale * np.log1p(-uniform), _TINY)


def sample_jump(
    spec: GeneratorSpec,
    current: int,
    epsilon: float,
    rng: np.random.Generator,
    *,
    time: float = 0.0,
) -> JumpEvent:
    """Draw the next switch out of ``current``.

    Two uniforms are consumed per event: the first sets the exponential
    waiting time with rate ``exit_rates[current] / epsilon`` by inversion, the
    second picks the destination by cumulative-sum inversion over column
    ``current`` of ``P``.
    """

    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    if not 0 <= current < spec.num_states:
        raise ChainError(f"state {current} outside 0..{spec.num_states - 1}")
    if spec.num_states == 1:
        raise ChainError("single-state chain never jumps")
    uniforms = rng.random(2)
    waiting = float(_waiting_from_uniform(uniforms[0], epsilon / spec.exit_rates[current]))
    destination = bisect.bisect_right(spec.jump_cdf[current], float(uniforms[1]))
    destination = min(destination, spec.num_states - 1)
    return JumpEvent(
        time=time + waiting,
        from_state=int(current),
        to_state=int(destination),
        waiting_time=waiting,
    )


class EnvironmentStream:
    """Chunked generator of one environment realisation.

    Draws are taken in ``chunk`` blocks with the same per-event order as
    :func:`sample_jump`, so a stream is reproducible from its generator state.
    """

    def __init__(
        self,
        spec: GeneratorSpec,
        initial_state: int,
        epsilon: float,
        rng: np.random.Generator,
        *,
        start_time: float = 0.0,
        chunk: int = 4096,
    ) -> None:
        if epsilon <= 0.0:
            raise ValueError("epsilon must be positive")
        if not 0 <= initial_state < spec.num_states:
            raise ChainError(f"state {initial_state} outside 0..{spec.num_states - 1}")
        self.spec = spec
        self.epsilon = float(epsilon)
        self.rng = rng
        self.chunk = int(chunk)
        self._state = int(initial_state)
        self._time = float(start_time)
        self._scales = [self.epsilon / rate if rate > 0 else math.inf for rate in spec.exit_rates]

    @property
    def state(self) -> int:
        return self._state

    def next_chunk(self) -> EventLog:
        """Return the next ``chunk`` events (empty for a single-state chain)."""

        if self.spec.num_states == 1:
            return EventLog()
        uniforms = self.rng.random((self.chunk, 2))
        exponentials = -np.log1p(-uniforms[:, 0])
        destinations = uniforms[:, 1].tolist()
        cdf = self.spec.jump_cdf
        scales = self._scales
        last = self.spec.num_states - 1

        times = np.empty(self.chunk)
        waits = np.empty(self.chunk)
        sources = np.empty(self.chunk, dtype=np.int64)
        targets = np.empty(self.chunk, dtype=np.int64)
        state = self._state
        now = self._time
        for idx, exponential in enumerate(exponentials.tolist()):
            wait = max(scales[state] * exponential, _TINY)
            now += wait
            target = min(bisect.bisect_right(cdf[state], destinations[idx]), last)
            times[idx] = now
            waits[idx] = wait
            sources[idx] = state
            targets[idx] = target
            state = target
        self._state = state
        self._time = now
        return EventLog(times=times, from_states=sources, to_states=targets, waiting_times=waits)


def sample_environment(
    spec: GeneratorSpec,
    initial_state: int,
    epsilon: float,
    t_final: float,
    rng: np.random.Generator,
    *,
    chunk: int = 4096,
) -> EventLog:
    """Sample every switch of one environment path on ``[0, t_final]``."""

    stream = EnvironmentStream(spec, initial_state, epsilon, rng, chunk=chunk)
    pieces: List[EventLog] = []
    while True:
        block = stream.next_chunk()
        if len(block) == 0:
            break
        inside = block.times <= t_final
        if not np.all(inside):
            stop = int(np.argmin(inside))
            pieces.append(
                EventLog(
                    times=block.times[:stop],
                    from_states=block.from_states[:stop],
                    to_states=block.to_states[:stop],
                    waiting_times=block.waiting_times[:stop],
                )
            )
            break
        pieces.append(block)
    return EventLog.concatenate(pieces)


__all__ = [
    "EnvironmentStream",
    "EventLog",
    "GeneratorSpec",
    "JumpEvent",
    "build_generator",
    "decompose_transitions",
    "diffusion_matrix",
    "expected_jump_rate",
    "pseudo_inverse",
    "sample_environment",
    "sample_jump",
    "series_identity_residual",
    "symmetrized_diffusion",
]
