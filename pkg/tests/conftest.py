import sys
from pathlib import Path

import numpy as np
import pytest

from hybrid.markov import GeneratorSpec, build_generator
from hybrid.models import (
    RicSwitchParams,
    benchmark_chain as build_benchmark_chain,
    benchmark_drive_params,
    ric_drive_variant,
    ric_parameter_switching,
)

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))


def pytest_addoption(parser: pytest.Parser) -> None:
    parser.addoption(
        "--run-slow",
        action="store_true",
        default=False,
        help="Run long Monte-Carlo experiments marked as slow.",
    )


def pytest_collection_modifyitems(config: pytest.Config, items: list[pytest.Item]) -> None:
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def benchmark_chain() -> GeneratorSpec:
    return build_benchmark_chain()


@pytest.fixture()
def asymmetric_pair() -> GeneratorSpec:
    """Two states with rho = (2/3, 1/3)."""

    return build_generator([[0.0, 2.0], [1.0, 0.0]])


@pytest.fixture()
def symmetric_pair() -> GeneratorSpec:
    return build_generator([[0.0, 1.0], [1.0, 0.0]])


@pytest.fixture(scope="session")
def drive_model(benchmark_chain: GeneratorSpec):
    return ric_drive_variant(benchmark_drive_params(), benchmark_chain)


@pytest.fixture()
def switching_model(symmetric_pair: GeneratorSpec):
    params = RicSwitchParams(mu=(1.0, 1.0), eta=(1.5, 2.5), alpha=1.0)
    return ric_parameter_switching(params, symmetric_pair)


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)
