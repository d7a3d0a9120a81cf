"""Command-line front end for the experiment studies.

Subcommands
-----------
converge        outer-loop trajectories per element count
sweep-power     mean sum-rate versus per-element power cap (dBm)
sweep-distance  mean sum-rate versus maximum ID-user distance (m)
oracle-check    independent cross-checks (lift equivalence, tiny brute force)

Each study subcommand reads an optional JSON config file (see
experiments.config_from_json for the schema) and applies flag overrides on
top: ``--seed``, ``--trials``, ``--out``, ``--n`` (element count).  Outputs
are CSV files plus a JSON run manifest; identical config and seed reproduce
the CSV byte for byte.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys

import numpy as np

from .channel import ScenarioParams, draw_channels
from .experiments import (
    DEFAULT_ELEMENTS,
    DEFAULT_DISTANCE_M,
    DEFAULT_POWER_DBM,
    ExperimentConfig,
    config_from_json,
    execute,
)
from .optimizer import max_total_harvest, run
from .oracle import brute_force_best, lift_equivalence_check
from .system import SystemConfig

logger = logging.getLogger(__name__)


def _load_config(path: str | None) -> ExperimentConfig:
    if path is None:
        doc: dict = {}
    else:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SystemExit(
                f"config {path}: parse error at line {exc.lineno}, "
                f"column {exc.colno}: {exc.msg}"
            )
        except OSError as exc:
            raise SystemExit(f"config {path}: {exc}")
    try:
        return config_from_json(doc)
    except (TypeError, ValueError) as exc:
        raise SystemExit(f"config {path or '<defaults>'}: {exc}")


def _apply_overrides(
    config: ExperimentConfig, args: argparse.Namespace, subcommand: str
) -> ExperimentConfig:
    updates: dict = {}
    if args.seed is not None:
        updates["base_seed"] = args.seed
    if args.trials is not None:
        updates["trials"] = args.trials
    if args.out is not None:
        updates["output_path"] = args.out

    expected = {
        "converge": "elements",
        "sweep-power": "power",
        "sweep-distance": "distance",
    }[subcommand]
    defaults = {
        "elements": DEFAULT_ELEMENTS,
        "power": DEFAULT_POWER_DBM,
        "distance": DEFAULT_DISTANCE_M,
    }[expected]
    if config.sweep_kind != expected:
        updates["sweep_kind"] = expected
        updates["sweep_values"] = defaults
    if args.n is not None:
        if expected == "elements":
            updates["sweep_values"] = (args.n,)
        else:
            updates["system"] = dataclasses.replace(
                config.system, n_elements=args.n
            )
    return dataclasses.replace(config, **updates)


def _run_study(args: argparse.Namespace, subcommand: str) -> int:
    config = _load_config(args.config)
    config = _apply_overrides(config, args, subcommand)
    outputs = execute(config, subcommand)
    for path in outputs:
        print(path)
    return 0


def _run_oracle_check(args: argparse.Namespace) -> int:
    seed = args.seed if args.seed is not None else 0
    trials = args.trials if args.trials is not None else 100
    checks: list[dict] = []

    report = lift_equivalence_check(trials=trials, seed=seed)
    ok = report.failures == 0
    checks.append(
        {
            "check": "lift-equivalence",
            "passed": ok,
            "trials": report.trials,
            "max_rel_error": report.max_rel_error,
        }
    )
    print(
        f"{'PASS' if ok else 'FAIL'} lift-equivalence: {report.trials} trials, "
        f"max relative error {report.max_rel_error:.3e}"
    )

    for trial in range(3):
        rng = np.random.default_rng(seed + trial)
        base = SystemConfig(
            n_elements=2,
            n_id=1,
            n_eh=1,
            p_elem_max=0.01,
            q_harvest_min=0.0,
            eh_efficiency=0.5,
            noise_pow=np.full(1, 1e-9),
        )
        ch, _ = draw_channels(base, ScenarioParams(), rng)
        floor = 0.1 * max_total_harvest(base, ch)
        cfg = SystemConfig(
            n_elements=2,
            n_id=1,
            n_eh=1,
            p_elem_max=0.01,
            q_harvest_min=floor,
            eh_efficiency=0.5,
            noise_pow=np.full(1, 1e-9),
        )
        grid = brute_force_best(cfg, ch.h_id[0], ch.h_eh[0])
        result = run(cfg, ch)
        ok = (
            grid.feasible
            and result.status == "converged"
            and result.achieved_sum_rate >= grid.sum_rate * (1.0 - 0.02)
        )
        checks.append(
            {
                "check": f"tiny-optimality-{trial}",
                "passed": ok,
                "pipeline_rate": result.achieved_sum_rate,
                "grid_rate": grid.sum_rate,
            }
        )
        print(
            f"{'PASS' if ok else 'FAIL'} tiny-optimality seed {seed + trial}: "
            f"pipeline {result.achieved_sum_rate:.6f} vs grid {grid.sum_rate:.6f}"
        )

    if args.out is not None:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump({"seed": seed, "checks": checks}, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(args.out)
    return 0 if all(c["passed"] for c in checks) else 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="triswipt",
        description="Sum-rate beamforming experiments (CSV outputs + manifest).",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, help_ in (
        ("converge", "record outer-loop trajectories per element count"),
        ("sweep-power", "mean sum-rate versus per-element power cap (dBm)"),
        ("sweep-distance", "mean sum-rate versus maximum ID distance (m)"),
        ("oracle-check", "run independent cross-checks and report PASS/FAIL"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", type=str, default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="base RNG seed")
        p.add_argument("--trials", type=int, default=None, help="trials per point")
        p.add_argument("--out", type=str, default=None, help="output path")
        p.add_argument("--n", type=int, default=None, help="element count")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    args = _build_parser().parse_args(argv)
    if args.subcommand == "oracle-check":
        return _run_oracle_check(args)
    return _run_study(args, args.subcommand)


if __name__ == "__main__":
    sys.exit(main())
