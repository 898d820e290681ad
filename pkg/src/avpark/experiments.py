"""Sweep harness: scale, time-scaling, convergence and communication-loss runs.

Every (sweep point, seed) pair is an isolated job that regenerates its
instance from the seed, so jobs can run in any order or in worker
processes and the CSVs still come out identical.  Only the ``wallclock_s``
column depends on the machine.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .baseline import NAME as GREEDY, solve_greedy
from .coordinator import DELTA, EPSILON, GAMMA_INIT, RunParams, run_distributed
from .errors import (InstanceInfeasibleError, InvalidConfigError, OracleLimitError,
                     RecoveryFailedError)
from .instance import GeneratorConfig, generate_instance, map_slot, rescale_time
from .model import Assignment, check_feasibility, objective
from .netsim import ChannelModel, stale_fraction
from .oracle import DEFAULT_MAX_NODES, solve_exact

TESTS = ("scale-avs", "scale-facilities", "time-scaling", "convergence", "comm-loss")
SOLVERS = ("exact", "distributed", GREEDY)
FORMAT = "avpark-experiment"

COLUMNS = ["test", "x", "seed", "solver", "status", "objective", "pct_of_exact", "iterations",
           "converged", "simulated_delay_ms", "stale_fraction", "feasible", "wallclock_s"]

# solvers each test runs when none are given
_DEFAULT_SOLVERS = {
    "scale-avs": SOLVERS,
    "scale-facilities": SOLVERS,
    "time-scaling": ("exact",),
    "convergence": ("distributed",),
    "comm-loss": ("distributed",),
}


@dataclass(frozen=True)
class ExperimentConfig:
    test: str
    sweep: tuple
    seed: int
    seeds: int = 1
    solvers: tuple = ()
    out_dir: str = "results"
    n_avs: int = 8
    n_facilities: int = 2
    D: int = 12
    drop_prob: float = 0.0
    delta: float = DELTA
    gamma_init: float = GAMMA_INIT
    epsilon: float = EPSILON
    max_iters: int = 500
    max_nodes: int = DEFAULT_MAX_NODES
    workers: int = 1

    def __post_init__(self):
        if self.test not in TESTS:
            raise InvalidConfigError(f"unknown test {self.test!r}; choose from {', '.join(TESTS)}")
        sweep = tuple(self.sweep)
        if not sweep:
            raise InvalidConfigError("sweep must be nonempty")
        object.__setattr__(self, "sweep", sweep)
        solvers = tuple(self.solvers) or _DEFAULT_SOLVERS[self.test]
        bad = [s for s in solvers if s not in SOLVERS]
        if bad:
            raise InvalidConfigError(f"unknown solver(s) {bad}; choose from {', '.join(SOLVERS)}")
        object.__setattr__(self, "solvers", solvers)
        if self.seeds < 1:
            raise InvalidConfigError("seeds must be >= 1")
        if self.workers < 1:
            raise InvalidConfigError("workers must be >= 1")
        if self.test == "comm-loss" and any(not 0 <= p <= 1 for p in sweep):
            raise InvalidConfigError("drop probabilities must lie in [0, 1]")
        if self.test in ("scale-avs", "scale-facilities", "time-scaling", "convergence"):
            if any(int(x) != x or x < 1 for x in sweep):
                raise InvalidConfigError(f"{self.test} sweep values must be positive integers")


def config_from_dict(doc: dict) -> ExperimentConfig:
    known = {f.name for f in fields(ExperimentConfig)}
    body = {k: v for k, v in doc.items() if k not in ("format", "version")}
    if doc.get("format", FORMAT) != FORMAT:
        raise InvalidConfigError(f"expected a {FORMAT} document, got {doc.get('format')!r}")
    unknown = set(body) - known
    if unknown:
        raise InvalidConfigError(f"unknown experiment keys: {sorted(unknown)}")
    try:
        return ExperimentConfig(**body)
    except TypeError as exc:
        raise InvalidConfigError(str(exc)) from exc


def config_to_text(cfg: ExperimentConfig) -> str:
    doc = {"format": FORMAT, "version": 1}
    doc.update({k: list(v) if isinstance(v, tuple) else v for k, v in asdict(cfg).items()})
    return json.dumps(doc, indent=1, sort_keys=False) + "\n"


def expand_assignment(a: Assignment, coarse_D: int, fine_D: int) -> Assignment:
    """Lift a coarse-scale assignment back onto the fine slots each coarse slot covers."""
    owner = {}
    for t in range(1, fine_D + 1):
        owner.setdefault(map_slot(t, fine_D, coarse_D), []).append(t)
    slots = tuple(tuple(t for s in sorted(ss) for t in owner.get(s, ())) for ss in a.slots)
    return Assignment(a.facility, slots)


def _instance_for(cfg: ExperimentConfig, x, j: int):
    seed = cfg.seed + j
    K, F, D = cfg.n_avs, cfg.n_facilities, cfg.D
    if cfg.test == "scale-avs":
        K = int(x)
    elif cfg.test == "scale-facilities":
        F = int(x)
    elif cfg.test == "convergence":
        K = int(x)
    return seed, generate_instance(GeneratorConfig(n_avs=K, n_facilities=F, D=D, seed=seed))


def _row(cfg, x, seed, solver, **values):
    row = dict.fromkeys(COLUMNS, "")
    row.update(test=cfg.test, x=x, seed=seed, solver=solver)
    row.update(values)
    return row


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(round(v, 9))
    return str(v)


def _run_solver(cfg, inst, solver, channel_seed, drop_prob, trace):
    """(status, assignment or None, iterations, delay, stale, report)."""
    if solver == "exact":
        a = solve_exact(inst, cfg.max_nodes)
        return ("ok" if a is not None else "infeasible"), a, "", "", "", None
    if solver == GREEDY:
        a = solve_greedy(inst)
        return ("ok" if a is not None else "infeasible"), a, "", "", "", None
    channel = ChannelModel(drop_prob) if drop_prob > 0 else None
    params = RunParams(cfg.delta, cfg.gamma_init, cfg.epsilon, cfg.max_iters, channel, trace)
    rep = run_distributed(inst, params, seed=channel_seed)
    return ("ok", rep.assignment, rep.iterations, rep.simulated_delay_ms,
            stale_fraction(rep), rep)


def run_job(cfg: ExperimentConfig, point: int, j: int):
    """All rows (and convergence traces) for one (sweep point, seed) job."""
    x = cfg.sweep[point]
    seed, inst = _instance_for(cfg, x, j)
    fine = None
    if cfg.test == "time-scaling":
        if int(x) > inst.D:
            return [_row(cfg, x, seed, s, status="error:cannot refine") for s in cfg.solvers], {}
        fine, inst = inst, rescale_time(inst, int(x))
    drop = float(x) if cfg.test == "comm-loss" else cfg.drop_prob
    trace = cfg.test == "convergence"

    rows, traces, exact_obj = [], {}, None
    for solver in cfg.solvers:
        started = time.perf_counter()
        try:
            status, a, iters, delay, stale, rep = _run_solver(cfg, inst, solver, seed, drop, trace)
        except OracleLimitError:
            status, a, iters, delay, stale, rep = "oracle-limit", None, "", "", "", None
        except InstanceInfeasibleError:
            status, a, iters, delay, stale, rep = "infeasible", None, "", "", "", None
        except RecoveryFailedError:
            status, a, iters, delay, stale, rep = "recovery-failed", None, "", "", "", None
        except Exception as exc:  # one bad row must not stop the sweep
            status, a, iters, delay, stale, rep = f"error:{type(exc).__name__}", None, "", "", "", None
        wall = time.perf_counter() - started
        obj, feas = "", ""
        if a is not None:
            if fine is not None:
                # report on the fine scale so points along the sweep are comparable
                a = expand_assignment(a, inst.D, fine.D)
                feas = not check_feasibility(fine, a)
            else:
                feas = not check_feasibility(inst, a)
            obj = objective(a)
            if solver == "exact":
                exact_obj = obj
        rows.append(_row(cfg, x, seed, solver, status=status, objective=obj, iterations=iters,
                         converged=rep.converged if rep else "", simulated_delay_ms=delay,
                         stale_fraction=stale, feasible=feas, wallclock_s=wall))
        if rep is not None and trace:
            traces[(x, seed)] = rep.to_csv()
    if fine is not None and "exact" in cfg.solvers:
        # percentages for time scaling are against the fine-scale optimum
        try:
            best = solve_exact(fine, cfg.max_nodes)
            exact_obj = objective(best) if best is not None else None
        except OracleLimitError:
            exact_obj = None
    for row in rows:
        if exact_obj and row["objective"] != "":
            row["pct_of_exact"] = 100.0 * row["objective"] / exact_obj
    return rows, traces


def _job(args):
    cfg, point, j = args
    return point, j, run_job(cfg, point, j)


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run the sweep and write CSV and plot-data files; returns {name: path}."""
    jobs = [(cfg, p, j) for p in range(len(cfg.sweep)) for j in range(cfg.seeds)]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            done = list(pool.map(_job, jobs))
    else:
        done = [_job(job) for job in jobs]
    done.sort(key=lambda r: (r[0], r[1]))

    rows, traces = [], {}
    for _, _, (r, t) in done:
        rows.extend(r)
        traces.update(t)

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    stem = cfg.test
    path = out / f"{stem}.csv"
    path.write_text(results_csv(rows))
    written["results"] = path
    for solver in cfg.solvers:
        for metric in ("objective", "iterations"):
            series = plot_series(rows, solver, metric, cfg.sweep)
            if series:
                p = out / f"{stem}_{solver}_{metric}.dat"
                p.write_text(_two_column(series))
                written[f"{solver}_{metric}"] = p
    for (x, seed), text in sorted(traces.items()):
        p = out / f"{stem}_trace_x{x}_seed{seed}.csv"
        p.write_text(text)
        written[f"trace_{x}_{seed}"] = p
        dual = [(int(r["iteration"]), float(r["dual"])) for r in csv.DictReader(io.StringIO(text))]
        p = out / f"{stem}_dual_x{x}_seed{seed}.dat"
        p.write_text(_two_column(dual))
        primal = [(int(r["iteration"]), float(r["primal"]))
                  for r in csv.DictReader(io.StringIO(text)) if r["primal"]]
        p = out / f"{stem}_primal_x{x}_seed{seed}.dat"
        p.write_text(_two_column(primal))
    return written


def results_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in COLUMNS])
    return buf.getvalue()


def plot_series(rows, solver: str, metric: str, sweep) -> list:
    """Mean of ``metric`` per sweep value over rows that produced it."""
    series = []
    for x in sweep:
        vals = [r[metric] for r in rows
                if r["solver"] == solver and r["x"] == x and r[metric] != ""]
        if vals:
            series.append((x, math.fsum(vals) / len(vals)))
    return series


def _two_column(pairs) -> str:
    return "".join(f"{_fmt(x)} {_fmt(float(y))}\n" for x, y in pairs)
