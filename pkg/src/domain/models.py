"""Pydantic configuration models for switching-environment experiments.

A configuration document names one model variant (discriminated on the
``model`` key), the rate matrix of its environment, and the numerical knobs of
the experiment. Structural checks happen here; the numerical checks on the
chain (irreducibility, absorbing states) are delegated to
:func:`hybrid.markov.build_generator` when the experiment is assembled.
"""
from __future__ import annotations

import math
from typing import Annotated, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from hybrid.models import BENCHMARK_DRIVES, BENCHMARK_RATES


class ChainConfig(BaseModel):
    """Rate matrix ``W[n][m]`` for the jump ``m -> n``."""

    model_config = ConfigDict(extra="forbid")

    W: List[List[float]] = Field(default_factory=lambda: [list(row) for row in BENCHMARK_RATES])

    @model_validator(mode="after")
    def validate_shape(self) -> ChainConfig:  # type: ignore[override]
        size = len(self.W)
        if size == 0 or any(len(row) != size for row in self.W):
            raise ValueError("W must be a non-empty square matrix")
        for n, row in enumerate(self.W):
            if row[n] != 0.0:
                raise ValueError("W must have a zero diagonal")
            if any(rate < 0.0 or not math.isfinite(rate) for rate in row):
                raise ValueError("W entries must be finite and nonnegative")
        return self

    @property
    def num_states(self) -> int:
        return len(self.W)


class RicSwitchConfig(BaseModel):
    """Clock whose ``mu`` and ``eta`` switch with the environment."""

    model_config = ConfigDict(extra="forbid")

    model: Literal["ric_switch"] = "ric_switch"
    mu: List[float]
    eta: List[float]
    alpha: float = 0.0
    chain: ChainConfig

    @model_validator(mode="after")
    def validate_lengths(self) -> RicSwitchConfig:  # type: ignore[override]
        states = self.chain.num_states
        if len(self.mu) != states or len(self.eta) != states:
            raise ValueError(f"mu and eta need one value per state ({states})")
        return self


class RicDriveConfig(BaseModel):
    """Clock with a switched additive drive vector."""

    model_config = ConfigDict(extra="forbid")

    model: Literal["ric_drive"] = "ric_drive"
    mu: float = 1.0
    eta: float = 2.0
    alpha: float = 1.0
    v: List[Tuple[float, float]] = Field(default_factory=lambda: [tuple(item) for item in BENCHMARK_DRIVES])
    drive: Literal["cartesian", "radial"] = "cartesian"
    center_drive: bool = True
    r_min: float = Field(1e-3, ge=0.0, description="Origin guard for the radial drive")
    chain: ChainConfig = Field(default_factory=ChainConfig)

    @model_validator(mode="after")
    def validate_lengths(self) -> RicDriveConfig:  # type: ignore[override]
        if len(self.v) != self.chain.num_states:
            raise ValueError(f"v needs one drive vector per state ({self.chain.num_states})")
        return self


class RicBaseConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mu: float = 1.0
    eta: float = 2.0
    alpha: float = 1.0


class DichotomousConfig(BaseModel):
    """Two-state additive input on a deterministic clock."""

    model_config = ConfigDict(extra="forbid")

    model: Literal["dichotomous"] = "dichotomous"
    base: RicBaseConfig = Field(default_factory=RicBaseConfig)
    I0: Tuple[float, float]
    I1: Tuple[float, float]
    chain: ChainConfig

    @model_validator(mode="after")
    def validate_states(self) -> DichotomousConfig:  # type: ignore[override]
        if self.chain.num_states != 2:
            raise ValueError("dichotomous model needs a two-state chain")
        return self


ModelConfig = Annotated[
    Union[RicSwitchConfig, RicDriveConfig, DichotomousConfig],
    Field(discriminator="model"),
]


class InitialConditions(BaseModel):
    """Oscillator ``i`` starts at polar ``(radius + i * radius_offset, phase + i * phase_offset)``."""

    model_config = ConfigDict(extra="forbid")

    radius: float = Field(1.0, gt=0.0)
    radius_offset: float = 0.1
    phase: float = 0.0
    phase_offset: float = 0.1
    oscillators: int = Field(2, ge=1)
    state: int = Field(0, ge=0, description="Initial environment state")

    @model_validator(mode="after")
    def validate_finite(self) -> InitialConditions:  # type: ignore[override]
        values = (self.radius, self.radius_offset, self.phase, self.phase_offset)
        if not all(math.isfinite(value) for value in values):
            raise ValueError("initial offsets must be finite")
        if self.radius + (self.oscillators - 1) * self.radius_offset <= 0.0:
            raise ValueError("every oscillator needs a positive starting radius")
        return self


class ExperimentConfig(BaseModel):
    """Everything a command-line run needs besides the output directory."""

    model_config = ConfigDict(extra="forbid")

    model: ModelConfig = Field(default_factory=RicDriveConfig)
    epsilon: float = Field(0.01, gt=0.0)
    t_final: float = Field(20.0 * math.pi, gt=0.0)
    output_dt: float = Field(0.05, gt=0.0)
    n_trials: int = Field(1, ge=1)
    seed: int = Field(0, ge=0)
    initial: InitialConditions = Field(default_factory=InitialConditions)
    fit_window: Tuple[float, float] = (0.1, 0.9)
    grid_size: int = Field(1024, ge=8)
    qss_dt: Optional[float] = Field(None, gt=0.0)
    qss_level: Literal["phase", "planar"] = Field(
        "phase", description="Diffusion approximation of the reduced phase or of the full planar model"
    )
    workers: int = Field(1, ge=1)

    @model_validator(mode="after")
    def validate_numerics(self) -> ExperimentConfig:  # type: ignore[override]
        start, end = self.fit_window
        if not 0.0 <= start < end <= 1.0:
            raise ValueError("fit_window must satisfy 0 <= start < end <= 1")
        if self.output_dt > self.t_final:
            raise ValueError("output_dt must not exceed t_final")
        if self.qss_dt is not None and self.qss_dt > self.epsilon:
            raise ValueError("qss_dt must not exceed epsilon")
        if self.initial.state >= self.model.chain.num_states:
            raise ValueError("initial.state is not a state of the chain")
        return self

    @property
    def resolved_qss_dt(self) -> float:
        return self.qss_dt if self.qss_dt is not None else self.epsilon / 10.0


__all__ = [
    "ChainConfig",
    "DichotomousConfig",
    "ExperimentConfig",
    "InitialConditions",
    "ModelConfig",
    "RicBaseConfig",
    "RicDriveConfig",
    "RicSwitchConfig",
]
