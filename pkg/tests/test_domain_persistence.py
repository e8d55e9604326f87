import csv
import json
from pathlib import Path

import numpy as np
import pytest

from domain.models import ExperimentConfig, RicDriveConfig
from domain.persistence import (
    ConfigSerializer,
    ResultFileAdapter,
    apply_overrides,
    generator_to_dict,
    load_experiment_config,
    load_generator,
)
from hybrid.cycle import compute_prc, model_limit_cycle
from hybrid.dynamics import HybridTrajectory
from hybrid.errors import ConfigError
from hybrid.markov import EventLog, build_generator
from hybrid.models import deterministic_ric


def read_rows(path: Path):
    with path.open(encoding="utf-8", newline="") as handle:
        return list(csv.reader(handle))


def test_config_serializer_round_trip():
    config = ExperimentConfig(epsilon=0.02, seed=7)
    payload = ConfigSerializer.to_dict(config)
    restored = ConfigSerializer.from_dict(json.loads(json.dumps(payload)))
    assert restored == config


def test_model_overrides_default_to_drive_variant():
    config = ConfigSerializer.from_dict({"model": {"eta": 3.0}})
    assert isinstance(config.model, RicDriveConfig)
    assert config.model.eta == 3.0


def test_overrides_parse_json_literals_and_strings():
    payload = apply_overrides(
        {"initial": {"radius": 1.0}},
        ["initial.phase_offset=0.2", "model.drive=radial", "fit_window=[0.2, 0.8]", "seed=4"],
    )
    assert payload["initial"] == {"radius": 1.0, "phase_offset": 0.2}
    assert payload["model"]["drive"] == "radial"
    assert payload["fit_window"] == [0.2, 0.8]
    assert payload["seed"] == 4


@pytest.mark.parametrize("entry", ["no-separator", "=1"])
def test_malformed_override_is_a_config_error(entry):
    with pytest.raises(ConfigError, match="invalid override"):
        apply_overrides({}, [entry])


def test_override_cannot_descend_into_scalar():
    with pytest.raises(ConfigError, match="non-object"):
        apply_overrides({"epsilon": 0.1}, ["epsilon.value=2"])


def test_load_experiment_config_from_file(tmp_path: Path):
    config_file = tmp_path / "experiment.json"
    config_file.write_text(json.dumps({"epsilon": 0.05, "n_trials": 4}), encoding="utf-8")
    config = load_experiment_config(config_file, ["seed=11"])
    assert config.epsilon == 0.05
    assert config.n_trials == 4
    assert config.seed == 11


def test_load_experiment_config_failures(tmp_path: Path):
    with pytest.raises(ConfigError, match="does not exist"):
        load_experiment_config(tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_experiment_config(broken)
    listing = tmp_path / "list.json"
    listing.write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(ConfigError, match="JSON object"):
        load_experiment_config(listing)
    with pytest.raises(ConfigError, match="invalid experiment config"):
        load_experiment_config(None, ["epsilon=-1"])


def test_generator_document_round_trip(tmp_path: Path, asymmetric_pair):
    chain_file = tmp_path / "chain.json"
    chain_file.write_text(json.dumps(generator_to_dict(asymmetric_pair)), encoding="utf-8")
    restored = load_generator(chain_file)
    np.testing.assert_allclose(restored.rho, asymmetric_pair.rho)
    chain_file.write_text(json.dumps({"rates": []}), encoding="utf-8")
    with pytest.raises(ConfigError, match="'W' matrix"):
        load_generator(chain_file)


def test_trajectory_and_events_csv(tmp_path: Path):
    trajectory = HybridTrajectory(
        sample_times=np.array([0.0, 0.5]),
        states_at_samples=np.array([0, 1]),
        paths=np.array([[[1.0, 0.0], [0.1 + 0.2, 0.5]], [[0.0, 1.0], [-0.25, 0.75]]]),
        epsilon=0.1,
        seed=0,
        t_final=0.5,
        events=EventLog(
            times=np.array([0.3]),
            from_states=np.array([0]),
            to_states=np.array([1]),
            waiting_times=np.array([0.3]),
        ),
        jump_count=1,
    )
    adapter = ResultFileAdapter(tmp_path / "out")
    rows = read_rows(adapter.write_trajectory(trajectory))
    assert rows[0] == ["t", "n", "osc", "x0", "x1"]
    assert len(rows) == 5
    assert rows[3] == ["0.5", "1", "0", "0.30000000000000004", "0.5"]

    events = read_rows(adapter.write_events(trajectory.events))
    assert events == [["t", "from", "to", "dt"], ["0.29999999999999999", "0", "1", "0.29999999999999999"]]


def test_diffusion_trajectory_leaves_state_column_empty(tmp_path: Path):
    trajectory = HybridTrajectory(
        sample_times=np.array([0.0]),
        states_at_samples=np.zeros(0, dtype=np.int64),
        paths=np.zeros((1, 1, 2)),
        epsilon=0.1,
        seed=0,
        t_final=0.1,
    )
    rows = read_rows(ResultFileAdapter(tmp_path).write_trajectory(trajectory))
    assert rows[1] == ["0", "", "0", "0", "0"]


def test_cycle_csv_has_one_row_per_grid_node(tmp_path: Path):
    lc = model_limit_cycle(deterministic_ric(), build_generator([[0.0]]), grid_size=32)
    prc = compute_prc(lc)
    rows = read_rows(ResultFileAdapter(tmp_path).write_cycle(lc, prc))
    assert rows[0] == ["theta", "phi_0", "phi_1", "R_0", "R_1"]
    assert len(rows) == 33
    assert float(rows[1][1]) == pytest.approx(1.0, abs=1e-8)


def test_log_difference_csv_and_json(tmp_path: Path):
    adapter = ResultFileAdapter(tmp_path)
    series = np.array([[-1.0, -2.0], [-1.5, -2.5]])
    rows = read_rows(adapter.write_log_differences(np.array([0.0, 1.0]), series))
    assert rows == [["t", "trial_0", "trial_1"], ["0", "-1", "-1.5"], ["1", "-2", "-2.5"]]
    path = adapter.write_json({"lambda": -0.1, "missing": float("nan")}, "report.json")
    assert json.loads(path.read_text(encoding="utf-8")) == {"lambda": -0.1, "missing": None}
