"""Exception hierarchy shared by the simulation and analysis layers."""
from __future__ import annotations


class HybridError(Exception):
    """Base error for every failure raised by the toolkit."""


class ConfigError(HybridError, ValueError):
    """Raised when an experiment or model configuration cannot be used."""


class ChainError(HybridError, ValueError):
    """Raised when a rate matrix does not define a usable Markov chain."""


class ModelError(HybridError, ValueError):
    """Raised when a hybrid model violates its registration invariants."""


class AnalysisError(HybridError, RuntimeError):
    """Raised when a phase-level computation produces an inconsistent result."""


class SimulationError(HybridError, RuntimeError):
    """Raised when a trajectory cannot be continued."""

    def __init__(self, message: str, *, time: float | None = None) -> None:
        if time is not None:
            message = f"{message} at t={time:.17g}"
        super().__init__(message)
        self.time = time


class DomainEscapeError(SimulationError):
    """A trajectory left the ball of radius ``domain_bound``."""

    def __init__(self, *, time: float) -> None:
        super().__init__("trajectory escaped domain", time=time)


class FieldBlowupError(SimulationError):
    """A vector field returned a non-finite value."""

    def __init__(self, *, time: float) -> None:
        super().__init__("field blowup", time=time)


class OriginSingularityError(SimulationError):
    """A trajectory came too close to a model's singular point."""

    def __init__(self, *, time: float) -> None:
        super().__init__("origin singularity", time=time)


class CycleError(HybridError, RuntimeError):
    """Base error for limit-cycle, PRC, and isochron failures."""


class NoCycleError(CycleError):
    def __init__(self, detail: str = "") -> None:
        super().__init__("no attracting cycle found" + (f": {detail}" if detail else ""))


class EquilibriumError(CycleError):
    def __init__(self, detail: str = "") -> None:
        super().__init__("converged to equilibrium" + (f": {detail}" if detail else ""))


class AdjointError(CycleError):
    def __init__(self, detail: str = "") -> None:
        super().__init__("adjoint solve inconsistent" + (f": {detail}" if detail else ""))


class BasinError(CycleError):
    def __init__(self, detail: str = "") -> None:
        super().__init__("point not in basin" + (f": {detail}" if detail else ""))


__all__ = [
    "AdjointError",
    "AnalysisError",
    "BasinError",
    "ChainError",
    "ConfigError",
    "CycleError",
    "DomainEscapeError",
    "EquilibriumError",
    "FieldBlowupError",
    "HybridError",
    "ModelError",
    "NoCycleError",
    "OriginSingularityError",
    "SimulationError",
]
