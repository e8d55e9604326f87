"""CLI front end for switching-environment synchronisation experiments.

Sub-commands share one config document plus ``--set`` overrides:

* ``simulate``  hybrid trajectory and event log (``trajectory.csv``, ``events.csv``)
* ``prc``       averaged limit cycle and phase resetting curve (``cycle_prc.csv``)
* ``lyapunov``  theoretical exponents (``lyapunov.json``)
* ``sync``      empirical exponent of hybrid oscillator pairs (``sync.json``, ``sync_logdiff.csv``)
* ``qss-sim``   empirical exponent under the diffusion approximation (``qss_sync.json``)
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from domain.experiment_service import ExperimentService
from domain.persistence import load_experiment_config
from hybrid.errors import ConfigError, HybridError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
COMMANDS = ("simulate", "prc", "lyapunov", "sync", "qss-sim")


def parse_args(argv: Sequence[str] | None = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        description="Simulate and analyse oscillators synchronised by a shared switching environment.",
    )
    parser.add_argument("command", choices=COMMANDS, help="Pipeline stage to run.")
    parser.add_argument(
        "--config",
        type=Path,
        default=None,
        help="Experiment config JSON; built-in defaults are used when omitted.",
    )
    parser.add_argument("--seed", type=int, default=None, help="Override the master RNG seed.")
    parser.add_argument(
        "--out",
        type=Path,
        default=Path("."),
        help="Directory receiving the CSV/JSON artifacts.",
    )
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Dotted config override with a JSON literal value, e.g. initial.phase_offset=0.2.",
    )
    parser.add_argument("--verbose", action="store_true", help="Log per-stage numerics.")
    return parser.parse_args(argv)


def _run(command: str, service: ExperimentService, out_dir: Path) -> None:
    if command == "simulate":
        result = service.simulate(out_dir)
        print(f"Wrote {result.trajectory_path} and {result.events_path}")
        if result.jumps is not None:
            print(
                f"Jumps per period: {result.jumps.measured_per_period:.1f} "
                f"(predicted {result.jumps.predicted_per_period:.1f})"
            )
    elif command == "prc":
        result = service.prc(out_dir)
        print(f"Wrote {result.path} | period {result.period:.12g} | {result.grid_size} nodes")
    elif command == "lyapunov":
        outcome = service.lyapunov(out_dir)
        print(
            f"Wrote {outcome.report_path} | lambda {outcome.report.lambda_exact:.10g} "
            f"| lambda_qss {outcome.report.lambda_qss:.10g}"
        )
    elif command == "sync":
        outcome = service.sync(out_dir)
        print(f"Wrote {outcome.report_path} and {outcome.log_difference_path}")
        print(
            f"Empirical {outcome.report.lambda_empirical:.6g} +/- {outcome.report.std_error:.2g} "
            f"| lambda {outcome.report.lambda_exact:.6g} | lambda_qss {outcome.report.lambda_qss:.6g}"
        )
    else:
        outcome = service.qss_sim(out_dir)
        print(f"Wrote {outcome.report_path}")
        print(
            f"Empirical {outcome.report.lambda_empirical:.6g} +/- {outcome.report.std_error:.2g} "
            f"| lambda_qss {outcome.report.lambda_qss:.6g} | lambda {outcome.report.lambda_exact:.6g}"
        )


def main(argv: Sequence[str] | None = None) -> int:
    args = parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="[%(levelname)s] %(message)s",
    )
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    out_dir = args.out.expanduser().resolve()

    try:
        config = load_experiment_config(args.config, overrides)
        service = ExperimentService(config)
        _run(args.command, service, out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HybridError as exc:
        print(f"{args.command} failed: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover - CLI entry point
    raise SystemExit(main())
