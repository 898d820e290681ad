"""Command-line front end: ``avpark generate|solve|experiment|export-lp|check``.

Exit codes: 0 success, 2 infeasible (or no feasible assignment found),
3 oracle node limit, 4 bad flags, config or input file, 1 anything else.
A ``--config`` file, when given, overrides the matching flags.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import experiments
from .baseline import NAME as GREEDY, solve_greedy
from .coordinator import DELTA, EPSILON, GAMMA_INIT, RunParams, run_distributed
from .errors import (InstanceInfeasibleError, InvalidConfigError, OracleLimitError,
                     RecoveryFailedError)
from .formats import (config_from_dict, read_assignment, read_instance, write_assignment,
                      write_instance)
from .instance import generate_instance
from .model import check_feasibility, export_lp, objective, violations_csv
from .netsim import ChannelModel
from .oracle import DEFAULT_MAX_NODES, solve_exact

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INFEASIBLE = 2
EXIT_ORACLE_LIMIT = 3
EXIT_CONFIG = 4


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which would read as "infeasible"
    def error(self, message):
        self.print_usage(sys.stderr)
        raise InvalidConfigError(message)


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidConfigError(f"config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise InvalidConfigError(f"config {path}: expected a JSON object")
    return doc


def _merge(flags: dict, path) -> dict:
    """Flags overlaid by the config file; unset flags (None) are dropped."""
    merged = {k: v for k, v in flags.items() if v is not None}
    merged.update(_load_config(path))
    return merged


def cmd_generate(args) -> int:
    flags = {
        "n_avs": args.avs, "n_facilities": args.facilities, "D": args.slots,
        "horizon_minutes": args.horizon_minutes, "area_km": args.area_km,
        "speed_kmh": args.speed, "seed": args.seed, "beta_mode": args.beta_mode,
        "travel_mode": args.travel_mode,
    }
    if args.capacity is not None:
        flags["capacity_rule"] = "half" if args.capacity == "half" else _int(args.capacity)
    doc = _merge(flags, args.config)
    if "seed" not in doc:
        raise InvalidConfigError("--seed is required; generation must be reproducible")
    if "n_avs" not in doc or "n_facilities" not in doc:
        raise InvalidConfigError("--avs and --facilities are required")
    cfg = config_from_dict(doc)
    inst = generate_instance(cfg)
    write_instance(inst, args.out)
    print(f"instance K={inst.K} F={inst.F} D={inst.D} seed={cfg.seed} -> {args.out}")
    return EXIT_OK


def _int(text):
    try:
        return int(text)
    except ValueError as exc:
        raise InvalidConfigError(f"expected an integer, got {text!r}") from exc


_SOLVE_KEYS = {"delta", "gamma_init", "epsilon", "max_iters", "drop_prob",
               "per_round_delay_ms", "seed", "max_nodes", "trace_primal"}


def cmd_solve(args) -> int:
    flags = {
        "delta": args.delta, "gamma_init": args.gamma_init, "epsilon": args.epsilon,
        "max_iters": args.max_iters, "drop_prob": args.drop_prob,
        "per_round_delay_ms": args.delay_ms, "seed": args.seed, "max_nodes": args.max_nodes,
        "trace_primal": args.trace_primal or None,
    }
    p = _merge(flags, args.config)
    unknown = set(p) - _SOLVE_KEYS
    if unknown:
        raise InvalidConfigError(f"unknown solve keys: {sorted(unknown)}")
    inst = read_instance(args.instance)
    started = time.perf_counter()
    extra = {"solver": args.solver}
    iterations = 0
    if args.solver == "exact":
        a = solve_exact(inst, int(p.get("max_nodes", DEFAULT_MAX_NODES)))
    elif args.solver == GREEDY:
        a = solve_greedy(inst)
    else:
        drop = float(p.get("drop_prob", 0.0))
        channel = None
        if drop > 0:
            channel = ChannelModel(drop, float(p.get("per_round_delay_ms", 200.0)))
        params = RunParams(float(p.get("delta", DELTA)), float(p.get("gamma_init", GAMMA_INIT)),
                           float(p.get("epsilon", EPSILON)), int(p.get("max_iters", 500)),
                           channel, bool(p.get("trace_primal", False)))
        rep = run_distributed(inst, params, seed=int(p.get("seed", 0)))
        a = rep.assignment
        iterations = rep.iterations
        extra.update(iterations=rep.iterations, converged=rep.converged,
                     simulated_delay_ms=rep.simulated_delay_ms)
        if args.trace:
            Path(args.trace).write_text(rep.to_csv())
        if args.drop_bitmap and rep.network is not None:
            Path(args.drop_bitmap).write_text(rep.network.drop_bitmap())
        print(rep.summary())
    elapsed = time.perf_counter() - started
    if a is None:
        print(f"solver={args.solver} infeasible time_s={elapsed:.3f}")
        return EXIT_INFEASIBLE
    feasible = not check_feasibility(inst, a)
    extra.update(objective=objective(a), feasible=feasible)
    write_assignment(a, args.out, extra)
    print(f"solver={args.solver} objective={objective(a)} feasible={feasible} "
          f"iterations={iterations} time_s={elapsed:.3f}")
    return EXIT_OK if feasible else EXIT_INFEASIBLE


def cmd_experiment(args) -> int:
    flags = {
        "test": args.test, "sweep": args.sweep, "seed": args.seed, "seeds": args.seeds,
        "solvers": args.solvers, "out_dir": args.out_dir, "n_avs": args.avs,
        "n_facilities": args.facilities, "D": args.slots, "drop_prob": args.drop_prob,
        "max_iters": args.max_iters, "max_nodes": args.max_nodes, "workers": args.workers,
    }
    doc = _merge(flags, args.config)
    if "seed" not in doc:
        raise InvalidConfigError("--seed is required; experiments must be reproducible")
    for key in ("test", "sweep"):
        if key not in doc:
            raise InvalidConfigError(f"--{key} is required")
    cfg = experiments.config_from_dict(doc)
    written = experiments.run_experiment(cfg)
    for name, path in written.items():
        print(f"{name}: {path}")
    return EXIT_OK


def cmd_export_lp(args) -> int:
    inst = read_instance(args.instance)
    Path(args.out).write_text(export_lp(inst))
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_check(args) -> int:
    inst = read_instance(args.instance)
    a = read_assignment(args.assignment)
    try:
        violations = check_feasibility(inst, a)
    except ValueError as exc:
        raise InvalidConfigError(str(exc)) from exc
    sys.stdout.write(violations_csv(violations))
    print(f"feasible={not violations} objective={objective(a)} violations={len(violations)}")
    return EXIT_OK if not violations else EXIT_INFEASIBLE


def _number_list(kind):
    def parse(text):
        try:
            return [kind(v) for v in text.split(",") if v.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc
    return parse


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="avpark", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="generate a random instance")
    g.add_argument("--avs", type=int)
    g.add_argument("--facilities", type=int)
    g.add_argument("--slots", type=int, help="number of time slots D")
    g.add_argument("--horizon-minutes", type=float)
    g.add_argument("--area-km", type=float)
    g.add_argument("--speed", type=float, help="km/h")
    g.add_argument("--capacity", help="'half' or an integer")
    g.add_argument("--beta-mode", choices=["random", "charging"])
    g.add_argument("--travel-mode", choices=["per-facility", "uniform"])
    g.add_argument("--seed", type=int)
    g.add_argument("--config")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="solve an instance file")
    s.add_argument("instance")
    s.add_argument("--solver", required=True, choices=list(experiments.SOLVERS))
    s.add_argument("--out", required=True)
    s.add_argument("--delta", type=float)
    s.add_argument("--gamma-init", type=float)
    s.add_argument("--epsilon", type=float)
    s.add_argument("--max-iters", type=int)
    s.add_argument("--drop-prob", type=float)
    s.add_argument("--delay-ms", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--max-nodes", type=int)
    s.add_argument("--trace-primal", action="store_true")
    s.add_argument("--trace", help="write the per-iteration dual/primal CSV here")
    s.add_argument("--drop-bitmap", help="write the per-round drop bitmap here")
    s.add_argument("--config")
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("experiment", help="run a seeded sweep and write CSVs")
    e.add_argument("--test", choices=list(experiments.TESTS))
    e.add_argument("--sweep", type=_number_list(float), help="comma-separated values")
    e.add_argument("--seed", type=int, help="base seed; job j uses seed + j")
    e.add_argument("--seeds", type=int, help="seeds per sweep point")
    e.add_argument("--solvers", type=lambda t: [v for v in t.split(",") if v])
    e.add_argument("--out-dir")
    e.add_argument("--avs", type=int)
    e.add_argument("--facilities", type=int)
    e.add_argument("--slots", type=int)
    e.add_argument("--drop-prob", type=float)
    e.add_argument("--max-iters", type=int)
    e.add_argument("--max-nodes", type=int)
    e.add_argument("--workers", type=int)
    e.add_argument("--config")
    e.set_defaults(func=cmd_experiment)

    x = sub.add_parser("export-lp", help="write the ILP in CPLEX LP format")
    x.add_argument("instance")
    x.add_argument("--out", required=True)
    x.set_defaults(func=cmd_export_lp)

    c = sub.add_parser("check", help="check an assignment file against an instance")
    c.add_argument("instance")
    c.add_argument("assignment")
    c.set_defaults(func=cmd_check)
    return ap


def _normalise_sweep(args):
    # integer sweeps print as 10 rather than 10.0 in CSVs
    if getattr(args, "sweep", None):
        args.sweep = [int(v) if float(v).is_integer() and args.test != "comm-loss" else v
                      for v in args.sweep]


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        _normalise_sweep(args)
        return args.func(args)
    except InvalidConfigError as exc:
        print(f"avpark: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"avpark: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InstanceInfeasibleError as exc:
        print(f"avpark: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except RecoveryFailedError as exc:
        print(f"avpark: no feasible assignment recovered: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OracleLimitError as exc:
        print(f"avpark: oracle limit: {exc}", file=sys.stderr)
        return EXIT_ORACLE_LIMIT
    except Exception as exc:
        print(f"avpark: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
