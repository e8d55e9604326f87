"""Domain package exposing experiment configs, persistence, and the run service."""
from .experiment_service import (
    CycleResult,
    ExperimentService,
    SimulationResult,
    SyncResult,
    build_model,
    initial_points,
)
from .models import (
    ChainConfig,
    DichotomousConfig,
    ExperimentConfig,
    InitialConditions,
    RicBaseConfig,
    RicDriveConfig,
    RicSwitchConfig,
)
from .persistence import (
    ConfigSerializer,
    ResultFileAdapter,
    apply_overrides,
    load_experiment_config,
    load_generator,
)

__all__ = [
    "ChainConfig",
    "ConfigSerializer",
    "CycleResult",
    "DichotomousConfig",
    "ExperimentConfig",
    "ExperimentService",
    "InitialConditions",
    "ResultFileAdapter",
    "RicBaseConfig",
    "RicDriveConfig",
    "RicSwitchConfig",
    "SimulationResult",
    "SyncResult",
    "apply_overrides",
    "build_model",
    "initial_points",
    "load_experiment_config",
    "load_generator",
]
