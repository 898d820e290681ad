"""Dual side of the distributed algorithm and the end-to-end run loop.

Each round the AVs solve their pricing subproblems on the prices they last
received, the control center sums the slot choices it last received,
moves the prices one projected subgradient step, and checks the relative
change of ``sum_k g_k``.  Step sizes grow by 1.1 after a round in which
``sum_k g_k`` fell and shrink by 0.1 otherwise, and never exceed
``gamma_init * (1 - eps) ** i``.
"""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import AvInfeasibleError, RecoveryFailedError
from .instance import Instance
from .model import Assignment, objective
from .netsim import DOWNLINK, UPLINK, ChannelModel, Mailbox, NetworkLog, deliver_round
from .recovery import recover_primal
from .subproblem import PriceVector, solve_subproblem

GAMMA_INIT = 0.01
EPSILON = 1e-3
DELTA = 1e-5
GROW = 1.1
SHRINK = 0.1


@dataclass(frozen=True, eq=False)
class StepState:
    gamma_hi: np.ndarray
    gamma_lo: np.ndarray
    iteration: int = 0
    gamma_init: float = GAMMA_INIT
    epsilon: float = EPSILON

    @classmethod
    def initial(cls, n_facilities: int, D: int, gamma_init: float = GAMMA_INIT,
                epsilon: float = EPSILON) -> "StepState":
        g = np.full((n_facilities, D + 1), float(gamma_init))
        return cls(g, g.copy(), 0, gamma_init, epsilon)

    @property
    def cap(self) -> float:
        return step_cap(self.iteration, self.gamma_init, self.epsilon)


def step_cap(i: int, gamma_init: float = GAMMA_INIT, epsilon: float = EPSILON) -> float:
    return gamma_init * (1.0 - epsilon) ** i


def update_steps(steps: StepState, history) -> StepState:
    """Advance the step sizes by one iteration.

    The same improvement signal (did ``sum_k g_k`` drop?) drives both step
    arrays.  With fewer than two history entries only the cap is applied.
    """
    i = steps.iteration + 1
    if len(history) >= 2:
        factor = GROW if history[-1] - history[-2] < 0 else SHRINK
    else:
        factor = 1.0
    cap = step_cap(i, steps.gamma_init, steps.epsilon)
    return replace(steps,
                   gamma_hi=np.minimum(steps.gamma_hi * factor, cap),
                   gamma_lo=np.minimum(steps.gamma_lo * factor, cap),
                   iteration=i)


def update_prices(prices: PriceVector, totals: np.ndarray, inst: Instance,
                  steps: StepState) -> PriceVector:
    """One projected step on both price arrays; ``totals`` is (F, D + 1)."""
    cap = inst.capacity[:, None].astype(float)
    demand = inst.demand.astype(float)
    hi = np.maximum(prices.lambda_hi - steps.gamma_hi * (cap - totals), 0.0)
    lo = np.maximum(prices.lambda_lo - steps.gamma_lo * (totals - demand), 0.0)
    hi[:, 0] = 0.0
    lo[:, 0] = 0.0
    return PriceVector(hi, lo)


def dual_objective(prices: PriceVector, g_values, inst: Instance) -> float:
    cap = inst.capacity[:, None].astype(float)
    terms = prices.lambda_hi[:, 1:] * cap - prices.lambda_lo[:, 1:] * inst.demand[:, 1:]
    return math.fsum(g_values) + math.fsum(terms.ravel().tolist())


def converged(history, delta: float = DELTA) -> bool:
    if len(history) < 2:
        return False
    prev, last = history[-2], history[-1]
    if last == 0:
        return prev == 0
    return abs(last - prev) / abs(last) < delta


def solve_all(inst: Instance, prices: PriceVector) -> list:
    coef = prices.coefficients()
    return [solve_subproblem(k, inst, prices, coef) for k in range(inst.K)]


def slot_totals(results, inst: Instance) -> np.ndarray:
    totals = np.zeros((inst.F, inst.D + 1))
    for r in results:
        if r is not None and r.slots:
            totals[r.facility, list(r.slots)] += 1
    return totals


def results_to_assignment(results, n_avs: int) -> Assignment:
    facility = [None] * n_avs
    slots = [()] * n_avs
    for r in results:
        if r is not None:
            facility[r.av] = r.facility
            slots[r.av] = r.slots
    return Assignment(tuple(facility), tuple(slots))


@dataclass(frozen=True)
class RunParams:
    delta: float = DELTA
    gamma_init: float = GAMMA_INIT
    epsilon: float = EPSILON
    max_iters: int = 500
    channel: Optional[ChannelModel] = None
    trace_primal: bool = False


@dataclass
class RunReport:
    """Outcome of one distributed run.

    ``iterations`` counts price updates; every series has one entry per
    subproblem round, i.e. ``iterations + 1`` entries.  ``dual`` is the dual
    function at the control center's prices (a true upper bound) and
    ``sum_g`` is the stopping signal built from the AVs' reported values.
    """

    iterations: int
    sum_g: list
    dual: list
    primal: list
    converged: bool
    simulated_delay_ms: float
    wallclock_s: float
    assignment: Assignment
    objective: int
    network: Optional[NetworkLog] = None
    final_prices: Optional[PriceVector] = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "dual", "primal", "gap"])
        for i, d in enumerate(self.dual):
            p = self.primal[i] if i < len(self.primal) else None
            gap = "" if p is None else repr(d - p)
            w.writerow([i, repr(d), "" if p is None else p, gap])
        return buf.getvalue()

    def summary(self) -> str:
        return (f"iterations={self.iterations} converged={self.converged} "
                f"simulated_delay_ms={self.simulated_delay_ms:g} objective={self.objective}")


def _recover_snapshot(inst, results):
    """Objective of the repaired snapshot, or None if repair fails."""
    try:
        a, _ = recover_primal(inst, results_to_assignment(results, inst.K))
    except RecoveryFailedError:
        return None
    return objective(a)


def run_distributed(inst: Instance, params: RunParams = RunParams(),
                    seed: int = 0) -> RunReport:
    """Run the price-coordination loop to convergence and recover a primal.

    ``seed`` keys the channel's drop stream when ``params.channel`` is set
    (it overrides the channel's own seed).  With no channel every message
    arrives.  Raises :class:`AvInfeasibleError` if some AV has no feasible
    facility and :class:`RecoveryFailedError` if repair fails.
    """
    started = time.perf_counter()
    for k in range(inst.K):
        if not inst.feasible[k].any():
            raise AvInfeasibleError(k)
    K, F, D = inst.K, inst.F, inst.D
    channel = params.channel
    if channel is not None:
        channel = replace(channel, seed=seed)
    log = NetworkLog(per_round_delay_ms=channel.per_round_delay_ms if channel else 200.0)

    prices = PriceVector.zeros(F, D)
    steps = StepState.initial(F, D, params.gamma_init, params.epsilon)
    # AV k's view of the prices, and the center's view of AV k's answer
    downlink = Mailbox({k: prices for k in range(K)})
    uplink = Mailbox({k: None for k in range(K)})

    sum_g, dual, primal = [], [], []
    is_converged = False
    i = 0
    while True:
        if i > 0 and channel is not None:
            deliver_round({k: prices for k in range(K)}, downlink, channel, i, DOWNLINK, log)
        if channel is None:
            results = solve_all(inst, prices)
            log.rounds.add(i)
            center_view = results
            exact_now = results
        else:
            coef_cache = {}
            results = []
            for k in range(K):
                p = downlink[k]
                coef = coef_cache.get(id(p))
                if coef is None:
                    coef = coef_cache[id(p)] = p.coefficients()
                results.append(solve_subproblem(k, inst, p, coef))
            deliver_round({k: results[k] for k in range(K)}, uplink, channel, i, UPLINK, log)
            center_view = [uplink[k] for k in range(K)]
            stale_prices = any(downlink[k] is not prices for k in range(K))
            exact_now = solve_all(inst, prices) if stale_prices else results

        sum_g.append(math.fsum(r.value for r in center_view if r is not None))
        dual.append(dual_objective(prices, [r.value for r in exact_now], inst))
        if params.trace_primal:
            primal.append(_recover_snapshot(inst, _fill_missing(inst, center_view, exact_now)))

        # a center that has never heard from some AV cannot judge convergence
        heard_all = all(r is not None for r in center_view)
        if i > 0 and heard_all and converged(sum_g, params.delta):
            is_converged = True
            break
        if i >= params.max_iters:
            break
        if i > 0:
            steps = update_steps(steps, sum_g)
        prices = update_prices(prices, slot_totals(center_view, inst), inst, steps)
        i += 1

    final = _fill_missing(inst, center_view, exact_now)
    a, _ = recover_primal(inst, results_to_assignment(final, K))
    obj = objective(a)
    if params.trace_primal:
        primal[-1] = obj
    return RunReport(
        iterations=i,
        sum_g=sum_g,
        dual=dual,
        primal=primal,
        converged=is_converged,
        simulated_delay_ms=log.simulated_delay_ms,
        wallclock_s=time.perf_counter() - started,
        assignment=a,
        objective=obj,
        network=log if channel is not None else None,
        final_prices=prices,
    )


def _fill_missing(inst, center_view, exact_now):
    """AVs the center never heard from fall back to a central solve at current prices."""
    return [center_view[k] if center_view[k] is not None else exact_now[k]
            for k in range(inst.K)]
