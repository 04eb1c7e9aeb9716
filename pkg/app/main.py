"""
Command-line interface of the decentralized online Frank-Wolfe simulator.
"""
import argparse
import json
import logging
import os
import sys
from typing import List, Optional

# Add project root to Python path
current_dir = os.path.dirname(os.path.abspath(__file__))
project_root = os.path.dirname(current_dir)
if project_root not in sys.path:
    sys.path.insert(0, project_root)

from app import config
from app.comparator import offline_comparator
from app.errors import SimulatorError, ValidationError
from app.experiment import (
    build_functions,
    build_set,
    build_topology,
    load_config,
    run_experiment,
    run_sweep,
    validate_config,
)
from app.schedule import make_schedule
from app.theory import theory_constants

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


def _ledger(args, cfg=None):
    if args.no_ledger or (cfg is not None and not cfg.ledger):
        return None
    from db.database import RunLedger
    return RunLedger(args.ledger_path)


def _print(payload) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True, default=str))


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    result = run_experiment(cfg, ledger=_ledger(args, cfg))
    _print({"output_dir": str(result.output_dir), **result.report.summary()})
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    validate_config(cfg)
    print(f"{args.config}: OK")
    return EXIT_OK


def cmd_spectral(args) -> int:
    cfg = load_config(args.config)
    validate_config(cfg)
    graph, _, spectral = build_topology(cfg)
    _print({"graph": graph.kind, "n": graph.n, "edges": len(graph.edges),
            "lambda2": spectral.lambda2, "k0": spectral.k0})
    return EXIT_OK


def _prepare(cfg):
    validate_config(cfg)
    feasible = build_set(cfg)
    schedule = make_schedule(cfg.T, cfg.mode, cfg.schedule, d=feasible.d, r=feasible.r)
    functions, profile = build_functions(cfg, schedule.effective_T, feasible)
    return feasible, schedule, functions, profile


def cmd_comparator(args) -> int:
    cfg = load_config(args.config)
    feasible, schedule, functions, profile = _prepare(cfg)
    result = offline_comparator(functions, feasible, cfg.mode, smoothness=profile.beta * schedule.effective_T)
    _print(result.to_dict())
    return EXIT_OK


def cmd_constants(args) -> int:
    cfg = load_config(args.config)
    feasible, schedule, _, profile = _prepare(cfg)
    _, _, spectral = build_topology(cfg)
    geometry = feasible.geometry
    constants = theory_constants(
        n=cfg.agents, lambda2=spectral.lambda2, k0=spectral.k0, G=profile.G, G0=profile.G0,
        sigma0=profile.sigma0, B=profile.B, D=geometry.D, d=feasible.d, delta=schedule.delta,
        r=feasible.r, C=cfg.theory_C, T=schedule.effective_T, R=geometry.R, beta=profile.beta,
    )
    _print(constants.to_dict())
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    path = run_sweep(cfg, graphs=args.graphs, budgets=args.budgets, seeds=args.seeds, ledger=_ledger(args, cfg))
    print(path)
    return EXIT_OK


def cmd_history(args) -> int:
    ledger = _ledger(args)
    if ledger is None:
        raise ValidationError("history needs the run ledger")
    runs = ledger.search_runs(name=args.name, mode=args.mode, graph_kind=args.graph)
    if not runs:
        print("No runs recorded.")
        return EXIT_OK
    for run in runs:
        print(f"{run['run_id']:>4}  {run['created_at'] or '':<26}  {run['name']:<30}  {run['mode']:<13}  "
              f"{run['graph_kind']:<11}  n={run['n']:<3}  T={run['effective_T']:<6}  "
              f"mean={run['mean_objective']:.6g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dofw",
        description="Decentralized online Frank-Wolfe simulator (convex, DR-submodular and bandit modes).",
    )
    parser.add_argument("--log-level", default=config.LOG_LEVEL, help="logging level (default: %(default)s)")
    parser.add_argument("--ledger-path", default=config.LEDGER_PATH, help="SQLite run ledger")
    parser.add_argument("--no-ledger", action="store_true", help="do not record runs in the ledger")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, func, text in (
        ("run", cmd_run, "run an experiment and write results.csv, manifest.json, constants.json"),
        ("comparator", cmd_comparator, "compute the offline comparator of a config"),
        ("constants", cmd_constants, "print the regret-bound constants of a config"),
        ("validate", cmd_validate, "check a config without computing"),
        ("spectral", cmd_spectral, "print lambda2 and k0 of the config's graph"),
    ):
        p = sub.add_parser(name, help=text)
        p.add_argument("config", help="experiment config (YAML)")
        p.set_defaults(func=func)

    p = sub.add_parser("sweep", help="repeat a run over graphs, cardinality budgets and seeds")
    p.add_argument("config", help="experiment config (YAML)")
    p.add_argument("--graphs", nargs="+", help="graph kinds to compare")
    p.add_argument("--budgets", nargs="+", type=int, help="cardinality budgets k")
    p.add_argument("--seeds", nargs="+", type=int, help="algorithm seeds")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("history", help="list runs recorded in the ledger")
    p.add_argument("--name", help="name substring")
    p.add_argument("--mode", help="mode filter")
    p.add_argument("--graph", help="graph kind filter")
    p.set_defaults(func=cmd_history)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """CLI entry point; returns the process exit code."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format=config.LOG_FORMAT)
    try:
        return args.func(args)
    except ValidationError as e:
        logger.error("%s", e)
        return EXIT_VALIDATION
    except SimulatorError as e:
        logger.error("%s", e)
        return EXIT_RUNTIME
    except Exception as e:
        logger.exception("Unexpected error: %s", e)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
