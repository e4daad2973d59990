"""Command-line entry point.

    qndread run <scenario> --config <path> [--out <dir>] [--seed <u64>]
                [--engine exact|moments] [--override-bounds]
    qndread validate --config <path>
    qndread list-scenarios

Exit codes: 0 ok, 2 config error (including unknown scenario), 3 simulation
failure.  Command-line flags override file values.
"""

from __future__ import annotations

import argparse
import sys

import yaml

from .scenarios import (
    SCENARIOS,
    ConfigInvalidError,
    ScenarioError,
    SimulationFailedError,
    UnknownScenarioError,
    run_scenario,
    validate_config,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SIMULATION = 3


def _load_config(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigInvalidError([f"config: file not found: {path}"])
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigInvalidError([f"config: parse error{where}: {exc}"])
    if cfg is None:
        cfg = {}
    if not isinstance(cfg, dict):
        raise ConfigInvalidError(["config: expected a mapping at top level"])
    return cfg


def _apply_overrides(cfg: dict, ns: argparse.Namespace) -> dict:
    cfg = dict(cfg)
    if getattr(ns, "out", None):
        cfg["out"] = ns.out
    if getattr(ns, "seed", None) is not None:
        cfg["seed"] = ns.seed
    if getattr(ns, "engine", None):
        cfg["engine"] = ns.engine
    if getattr(ns, "override_bounds", False):
        cfg["override_bounds"] = True
    return cfg


def _cmd_run(ns: argparse.Namespace) -> int:
    cfg = _apply_overrides(_load_config(ns.config), ns)
    result = run_scenario(ns.scenario, cfg)
    for path in result["outputs"]:
        print(path)
    print(result["manifest"])
    return EXIT_OK


def _cmd_validate(ns: argparse.Namespace) -> int:
    cfg = _load_config(ns.config)
    violations = validate_config(cfg)
    if violations:
        for v in violations:
            print(v, file=sys.stderr)
        return EXIT_CONFIG
    print("ok")
    return EXIT_OK


def _cmd_list(ns: argparse.Namespace) -> int:
    width = max(len(name) for name in SCENARIOS)
    for name in sorted(SCENARIOS):
        print(f"{name:<{width}}  {SCENARIOS[name][1]}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qndread",
                                     description="pulsed QND readout scenarios")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario from a config file")
    p_run.add_argument("scenario")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--engine", choices=["exact", "moments"])
    p_run.add_argument("--override-bounds", action="store_true",
                       dest="override_bounds")
    p_run.set_defaults(func=_cmd_run)

    p_val = sub.add_parser("validate", help="check a config file")
    p_val.add_argument("--config", required=True)
    p_val.set_defaults(func=_cmd_validate)

    p_list = sub.add_parser("list-scenarios", help="list scenario names")
    p_list.set_defaults(func=_cmd_list)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        return ns.func(ns)
    except (UnknownScenarioError, ConfigInvalidError) as exc:
        if isinstance(exc, ConfigInvalidError):
            for v in exc.violations:
                print(v, file=sys.stderr)
        else:
            print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except SimulationFailedError as exc:
        print(exc, file=sys.stderr)
        return EXIT_SIMULATION
    except ScenarioError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
