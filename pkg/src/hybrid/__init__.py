"""Numerical core for oscillators synchronised by a shared switching environment."""
from .cycle import (
    LimitCycle,
    Prc,
    Section,
    averaged_system,
    compute_prc,
    find_limit_cycle,
    isochronal_phase,
    model_limit_cycle,
)
from .dynamics import (
    HybridModel,
    HybridTrajectory,
    averaged_field,
    fluctuation_field,
    jump_count_summary,
    simulate_ensemble,
    simulate_pdmp,
    simulate_qss_ensemble,
    simulate_qss_sde,
)
from .errors import (
    AdjointError,
    AnalysisError,
    BasinError,
    ChainError,
    ConfigError,
    CycleError,
    DomainEscapeError,
    EquilibriumError,
    FieldBlowupError,
    HybridError,
    ModelError,
    NoCycleError,
    OriginSingularityError,
    SimulationError,
)
from .markov import (
    EventLog,
    GeneratorSpec,
    JumpEvent,
    build_generator,
    decompose_transitions,
    diffusion_matrix,
    expected_jump_rate,
    pseudo_inverse,
    sample_environment,
    sample_jump,
    series_identity_residual,
)
from .models import (
    RicDriveParams,
    RicSwitchParams,
    benchmark_chain,
    benchmark_drive_params,
    deterministic_ric,
    dichotomous_additive,
    ric_drive_variant,
    ric_parameter_switching,
)
from .phase import (
    LyapunovReport,
    PhaseCoupling,
    empirical_lyapunov,
    jump_sum_exponents,
    lyapunov_exact,
    lyapunov_qss,
    phase_coupling,
    phase_differences,
    simulate_phase_ensemble,
    simulate_phase_pdmp,
)

__all__ = [
    "AdjointError",
    "AnalysisError",
    "BasinError",
    "ChainError",
    "ConfigError",
    "CycleError",
    "DomainEscapeError",
    "EquilibriumError",
    "EventLog",
    "FieldBlowupError",
    "GeneratorSpec",
    "HybridError",
    "HybridModel",
    "HybridTrajectory",
    "JumpEvent",
    "LimitCycle",
    "LyapunovReport",
    "ModelError",
    "NoCycleError",
    "OriginSingularityError",
    "PhaseCoupling",
    "Prc",
    "RicDriveParams",
    "RicSwitchParams",
    "Section",
    "SimulationError",
    "averaged_field",
    "averaged_system",
    "build_generator",
    "compute_prc",
    "decompose_transitions",
    "deterministic_ric",
    "dichotomous_additive",
    "diffusion_matrix",
    "empirical_lyapunov",
    "expected_jump_rate",
    "find_limit_cycle",
    "fluctuation_field",
    "isochronal_phase",
    "jump_count_summary",
    "jump_sum_exponents",
    "lyapunov_exact",
    "lyapunov_qss",
    "model_limit_cycle",
    "benchmark_chain",
    "benchmark_drive_params",
    "phase_coupling",
    "phase_differences",
    "pseudo_inverse",
    "ric_drive_variant",
    "ric_parameter_switching",
    "sample_environment",
    "sample_jump",
    "series_identity_residual",
    "simulate_ensemble",
    "simulate_pdmp",
    "simulate_phase_ensemble",
    "simulate_phase_pdmp",
    "simulate_qss_ensemble",
    "simulate_qss_sde",
]
