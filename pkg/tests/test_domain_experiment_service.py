import math
from pathlib import Path

import numpy as np
import pytest

from domain.experiment_service import ExperimentService, build_model, initial_points
from domain.models import ExperimentConfig
from domain.persistence import ConfigSerializer
from hybrid.errors import ConfigError
from hybrid.phase import lyapunov_exact, lyapunov_qss


def switch_config(**overrides) -> ExperimentConfig:
    payload = {
        "model": {
            "model": "ric_switch",
            "mu": [1.0, 1.0],
            "eta": [1.5, 2.5],
            "alpha": 1.0,
            "chain": {"W": [[0.0, 1.0], [1.0, 0.0]]},
        },
        "grid_size": 128,
    }
    payload.update(overrides)
    return ConfigSerializer.from_dict(payload)


def test_build_model_covers_every_variant():
    model, chain = build_model(ExperimentConfig())
    assert model.num_states == 4
    assert chain.num_states == 4

    model, chain = build_model(switch_config())
    assert model.num_states == 2
    np.testing.assert_allclose(chain.rho, [0.5, 0.5])

    dichotomous = ConfigSerializer.from_dict(
        {
            "model": {
                "model": "dichotomous",
                "I0": [1.0, 0.0],
                "I1": [-2.0, 0.0],
                "chain": {"W": [[0.0, 2.0], [1.0, 0.0]]},
            }
        }
    )
    model, chain = build_model(dichotomous)
    assert model.num_states == 2
    assert model.analytic_phase is not None


def test_initial_points_apply_offsets():
    config = ConfigSerializer.from_dict(
        {"initial": {"radius": 1.0, "radius_offset": 0.5, "phase": 0.0, "phase_offset": math.pi / 2}}
    )
    np.testing.assert_allclose(initial_points(config), [[1.0, 0.0], [0.0, 1.5]], atol=1e-12)


def test_chain_problems_surface_as_config_errors():
    config = switch_config()
    payload = ConfigSerializer.to_dict(config)
    payload["model"]["chain"]["W"] = [[0.0, 1.0], [0.0, 0.0]]
    with pytest.raises(ConfigError, match="absorbing"):
        ExperimentService(ConfigSerializer.from_dict(payload))


def test_theoretical_exponents_match_library_calls():
    config = ConfigSerializer.from_dict({"grid_size": 128, "epsilon": 0.02})
    service = ExperimentService(config)
    exact, qss = service.theoretical_exponents()
    assert exact == pytest.approx(lyapunov_exact(service.coupling, service.spec, 0.02))
    assert qss == pytest.approx(lyapunov_qss(service.coupling, service.spec, 0.02))
    assert exact < 0.0
    assert qss < 0.0


def test_phases_of_cycle_points_follow_the_grid():
    service = ExperimentService(ConfigSerializer.from_dict({"grid_size": 128}))
    lc, _ = service.cycle
    theta = service.phases(lc.phi[None, 8:40:8, :])
    np.testing.assert_allclose(theta[0], lc.theta_grid[8:40:8], atol=1e-6)


def test_lyapunov_command_writes_report(tmp_path: Path):
    service = ExperimentService(switch_config(epsilon=0.1))
    outcome = service.lyapunov(tmp_path)
    assert outcome.report_path == tmp_path / "lyapunov.json"
    assert outcome.report.lambda_exact == pytest.approx(0.0, abs=1e-8)
    assert outcome.report.config["epsilon"] == 0.1


def test_sync_needs_a_pair(tmp_path: Path):
    service = ExperimentService(ConfigSerializer.from_dict({"initial": {"oscillators": 1}, "grid_size": 128}))
    with pytest.raises(ConfigError, match="exactly two oscillators"):
        service.sync(tmp_path)


def test_simulate_reports_jump_counts(tmp_path: Path):
    config = ConfigSerializer.from_dict({"t_final": 5.0, "output_dt": 0.5, "epsilon": 0.05, "seed": 3})
    service = ExperimentService(config)
    result = service.simulate(tmp_path)
    assert result.trajectory.paths.shape == (2, 11, 2)
    assert result.jumps is not None
    assert result.jumps.predicted_per_period > 0.0
    assert result.events_path.exists()



def test_qss_sim_defaults_to_the_reduced_phase(tmp_path: Path):
    config = ConfigSerializer.from_dict(
        {"grid_size": 128, "epsilon": 0.05, "t_final": 4.0, "output_dt": 0.1, "n_trials": 3, "seed": 2}
    )
    assert config.qss_level == "phase"
    service = ExperimentService(config)
    outcome = service.qss_sim(tmp_path)
    assert outcome.report_path == tmp_path / "qss_sync.json"
    assert outcome.report.n_trials == 3
    assert outcome.report.lambda_empirical is not None
    assert outcome.report.config["qss_level"] == "phase"


def test_qss_sim_planar_level_integrates_the_full_model(tmp_path: Path):
    overrides = {"grid_size": 128, "epsilon": 0.05, "t_final": 4.0, "output_dt": 0.1, "n_trials": 3}
    phase_run = ExperimentService(ConfigSerializer.from_dict(overrides)).qss_sim(tmp_path / "phase")
    planar_run = ExperimentService(ConfigSerializer.from_dict({**overrides, "qss_level": "planar"})).qss_sim(
        tmp_path / "planar"
    )
    assert planar_run.report.config["qss_level"] == "planar"
    assert planar_run.report.lambda_qss == pytest.approx(phase_run.report.lambda_qss)
    assert planar_run.report.lambda_empirical != phase_run.report.lambda_empirical


def test_qss_level_rejects_unknown_values():
    with pytest.raises(ConfigError):
        ConfigSerializer.from_dict({"qss_level": "radial"})
