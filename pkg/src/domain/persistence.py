"""Persistence helpers for experiment configs, chains, and result artifacts."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence

import numpy as np
from pydantic import ValidationError

from hybrid.cycle import LimitCycle, Prc
from hybrid.dynamics import HybridTrajectory
from hybrid.errors import ConfigError
from hybrid.formatting import format_float, precise_json
from hybrid.markov import EventLog, GeneratorSpec, build_generator

from .models import ExperimentConfig

DEFAULT_MODEL = "ric_drive"


class ConfigSerializer:
    """Serialize :class:`ExperimentConfig` instances to/from JSON-compatible dicts."""

    @staticmethod
    def to_dict(config: ExperimentConfig) -> Dict[str, Any]:
        return config.model_dump(mode="json")

    @staticmethod
    def from_dict(payload: Mapping[str, Any]) -> ExperimentConfig:
        """Validate ``payload``; any failure surfaces as :class:`ConfigError`.

        A ``model`` object without a ``model`` name is taken to be the default
        ``ric_drive`` variant.
        """

        document = dict(payload)
        model = document.get("model")
        if isinstance(model, Mapping) and "model" not in model:
            document["model"] = {"model": DEFAULT_MODEL, **model}
        try:
            return ExperimentConfig.model_validate(document)
        except ValidationError as exc:
            raise ConfigError(f"invalid experiment config: {exc}") from exc


def _parse_override(entry: str) -> tuple[List[str], Any]:
    key, separator, raw = entry.partition("=")
    if not separator or not key.strip():
        raise ConfigError(f"invalid override '{entry}'; expected KEY=VALUE")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip().split("."), value


def apply_overrides(payload: Mapping[str, Any], overrides: Iterable[str]) -> Dict[str, Any]:
    """Return a copy of ``payload`` with dotted ``KEY=VALUE`` overrides applied.

    Values are parsed as JSON literals and fall back to plain strings, so
    ``initial.phase_offset=0.2`` and ``model.drive=radial`` both work.
    """

    result: Dict[str, Any] = json.loads(json.dumps(payload))
    for entry in overrides:
        path, value = _parse_override(entry)
        cursor = result
        for part in path[:-1]:
            child = cursor.get(part)
            if child is None:
                child = {}
                cursor[part] = child
            if not isinstance(child, dict):
                raise ConfigError(f"override '{entry}' descends into non-object '{part}'")
            cursor = child
        cursor[path[-1]] = value
    return result


def load_experiment_config(path: Path | None, overrides: Sequence[str] = ()) -> ExperimentConfig:
    """Read the JSON config at ``path`` (defaults when ``None``) and apply overrides."""

    payload: Dict[str, Any] = {}
    if path is not None:
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file '{path}' does not exist") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file '{path}' is not valid JSON: {exc}") from exc
        if not isinstance(payload, dict):
            raise ConfigError("config document must be a JSON object")
    return ConfigSerializer.from_dict(apply_overrides(payload, overrides))


def generator_to_dict(spec: GeneratorSpec) -> Dict[str, Any]:
    return spec.to_document()


def load_generator(path: Path) -> GeneratorSpec:
    """Build a chain from a ``{"W": [[...], ...]}`` document."""

    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(payload, dict) or "W" not in payload:
        raise ConfigError(f"chain document '{path}' needs a 'W' matrix")
    return build_generator(payload["W"])


class ResultFileAdapter:
    """Writes plot-ready CSV and JSON artifacts under a base path."""

    def __init__(self, base_path: Path) -> None:
        self.base_path = base_path

    def _open(self, filename: str):
        destination = self.base_path / filename
        destination.parent.mkdir(parents=True, exist_ok=True)
        return destination, destination.open("w", encoding="utf-8", newline="")

    def write_json(self, payload: Mapping[str, Any], filename: str) -> Path:
        destination = self.base_path / filename
        destination.parent.mkdir(parents=True, exist_ok=True)
        destination.write_text(precise_json(dict(payload)), encoding="utf-8")
        return destination

    def write_trajectory(self, trajectory: HybridTrajectory, filename: str = "trajectory.csv") -> Path:
        """One row per oscillator per sample: ``t,n,osc,x0,...``."""

        oscillators, samples, dim = trajectory.paths.shape
        has_states = trajectory.states_at_samples.shape[0] == samples
        destination, handle = self._open(filename)
        with handle:
            writer = csv.writer(handle)
            writer.writerow(["t", "n", "osc", *[f"x{k}" for k in range(dim)]])
            for index in range(samples):
                time = format_float(trajectory.sample_times[index])
                state = str(int(trajectory.states_at_samples[index])) if has_states else ""
                for osc in range(oscillators):
                    coords = [format_float(value) for value in trajectory.paths[osc, index]]
                    writer.writerow([time, state, osc, *coords])
        return destination

    def write_events(self, events: EventLog, filename: str = "events.csv") -> Path:
        destination, handle = self._open(filename)
        with handle:
            writer = csv.writer(handle)
            writer.writerow(["t", "from", "to", "dt"])
            for event in events:
                writer.writerow(
                    [
                        format_float(event.time),
                        event.from_state,
                        event.to_state,
                        format_float(event.waiting_time),
                    ]
                )
        return destination

    def write_cycle(self, lc: LimitCycle, prc: Prc, filename: str = "cycle_prc.csv") -> Path:
        dim = lc.phi.shape[1]
        destination, handle = self._open(filename)
        with handle:
            writer = csv.writer(handle)
            writer.writerow(
                ["theta", *[f"phi_{k}" for k in range(dim)], *[f"R_{k}" for k in range(dim)]]
            )
            for index, theta in enumerate(lc.theta_grid):
                row = [theta, *lc.phi[index], *prc.R[index]]
                writer.writerow([format_float(value) for value in row])
        return destination

    def write_log_differences(
        self,
        sample_times: np.ndarray,
        log_differences: np.ndarray,
        filename: str = "sync_logdiff.csv",
    ) -> Path:
        """``t`` followed by one ``log|dtheta|`` column per trial."""

        series = np.atleast_2d(log_differences)
        destination, handle = self._open(filename)
        with handle:
            writer = csv.writer(handle)
            writer.writerow(["t", *[f"trial_{k}" for k in range(series.shape[0])]])
            for index, time in enumerate(sample_times):
                writer.writerow([format_float(time), *[format_float(v) for v in series[:, index]]])
        return destination


__all__ = [
    "ConfigSerializer",
    "ResultFileAdapter",
    "apply_overrides",
    "generator_to_dict",
    "load_experiment_config",
    "load_generator",
]
