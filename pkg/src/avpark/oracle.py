"""Exact solver for small instances; the reference for optimality claims.

Depth-first branch and bound over the facility choice of each AV (in id
order, facilities in id order).  Once every AV has a facility, the
facilities decouple and each one is an integral flow problem: AV ``k``
sends between ``stay_k`` and ``|window_k|`` units to the slots of its
window, each slot receives between ``demand_t`` and ``capacity`` units,
and the total is maximised.  Flow integrality makes that per-facility
solve exact.

Pruning at inner nodes:

* occupancy bound: per-facility ``sum_t min(capacity, AVs covering t)``
  for the AVs already placed, plus each remaining AV's longest window;
* capacity: the AVs placed at a facility must fit their minimum stays
  under capacity (monotone, so checked once per AV set and cached);
* demand: placed AVs plus every unplaced AV that could still cover a
  slot must reach that slot's demand.
"""
from __future__ import annotations

from functools import lru_cache

import networkx as nx
import numpy as np

from .errors import OracleLimitError
from .instance import Instance
from .model import Assignment, check_feasibility, objective

DEFAULT_MAX_NODES = 200_000


def _facility_flow(inst: Instance, f: int, avs: tuple, respect_demand: bool = True):
    """Best slot sets for ``avs`` all parked at ``f``; None if infeasible.

    Returns ``(value, {k: slots})``.
    """
    if not avs:
        if respect_demand and inst.demand[f, 1:].any():
            return None
        return 0, {}
    lo, hi = inst.windows
    cap = int(inst.capacity[f])
    G = nx.DiGraph()
    demand = {}

    def edge(u, v, lower, upper, cost=0):
        # lower bounds become node supplies/demands on a shifted edge
        G.add_edge(u, v, capacity=upper - lower, weight=cost)
        demand[u] = demand.get(u, 0) + lower
        demand[v] = demand.get(v, 0) - lower

    for k in avs:
        a, b = int(lo[k, f]), int(hi[k, f])
        edge("s", ("k", k), int(inst.plans.m_stay[k, f]), b - a + 1)
        for t in range(a, b + 1):
            edge(("k", k), ("t", t), 0, 1, -1)
    slots = sorted({t for k in avs for t in range(int(lo[k, f]), int(hi[k, f]) + 1)})
    for t in range(1, inst.D + 1):
        need = int(inst.demand[f, t]) if respect_demand else 0
        if t not in slots:
            if need > 0:
                return None
            continue
        edge(("t", t), "z", need, cap)
    edge("z", "s", 0, len(avs) * inst.D)
    for node in G.nodes:
        G.nodes[node]["demand"] = demand.get(node, 0)
    try:
        _, flow = nx.network_simplex(G)
    except nx.NetworkXUnfeasible:
        return None
    parked = {}
    for k in avs:
        parked[k] = tuple(sorted(v[1] for v, x in flow[("k", k)].items() if x > 0))
    return sum(len(s) for s in parked.values()), parked


def solve_exact(inst: Instance, max_nodes: int = DEFAULT_MAX_NODES):
    """Optimal assignment, or None when the instance is infeasible.

    Raises :class:`OracleLimitError` if more than ``max_nodes`` search nodes
    would be needed; the search never returns an unproven answer.
    """
    K, F, D = inst.K, inst.F, inst.D
    feasible = inst.feasible
    for k in range(K):
        if not feasible[k].any():
            return None
    lo, hi = inst.windows
    slot_idx = np.arange(D + 1)
    cover = (feasible[:, :, None] & (lo[:, :, None] <= slot_idx)
             & (slot_idx <= hi[:, :, None]))  # (K, F, D + 1)
    cover[:, :, 0] = False
    longest = np.where(feasible, hi - lo + 1, 0).max(axis=1)
    rest_longest = np.concatenate([np.cumsum(longest[::-1])[::-1], [0]])
    # suffix_cover[k, f, t]: AVs k.. that could still cover (f, t)
    suffix_cover = np.concatenate(
        [np.cumsum(cover[::-1], axis=0)[::-1], np.zeros((1, F, D + 1), dtype=int)])
    demand = inst.demand
    cap = inst.capacity[:, None]

    @lru_cache(maxsize=None)
    def placed_fits(f, avs):
        return _facility_flow(inst, f, avs, respect_demand=False) is not None

    @lru_cache(maxsize=None)
    def placed_solve(f, avs):
        return _facility_flow(inst, f, avs)

    choice = [None] * K
    members = [[] for _ in range(F)]
    placed_cover = np.zeros((F, D + 1), dtype=int)
    state = {"nodes": 0, "best": -1, "best_choice": None}

    def search(k):
        state["nodes"] += 1
        if state["nodes"] > max_nodes:
            raise OracleLimitError(f"search exceeded {max_nodes} nodes")
        bound = int(np.minimum(placed_cover, cap).sum()) + int(rest_longest[k])
        if bound <= state["best"]:
            return
        if np.any(placed_cover + suffix_cover[k] < demand):
            return
        if k == K:
            total = 0
            for f in range(F):
                res = placed_solve(f, tuple(members[f]))
                if res is None:
                    return
                total += res[0]
            if total > state["best"]:
                state["best"] = total
                state["best_choice"] = tuple(choice)
            return
        for f in range(F):
            if not feasible[k, f]:
                continue
            members[f].append(k)
            if placed_fits(f, tuple(members[f])):
                choice[k] = f
                placed_cover[f] += cover[k, f]
                search(k + 1)
                placed_cover[f] -= cover[k, f]
                choice[k] = None
            members[f].pop()

    search(0)
    if state["best_choice"] is None:
        return None
    best_choice = state["best_choice"]
    slots = [()] * K
    for f in range(F):
        group = tuple(k for k in range(K) if best_choice[k] == f)
        _, parked = placed_solve(f, group)
        for k, s in parked.items():
            slots[k] = s
    return Assignment(best_choice, tuple(slots))


def verify_optimal(inst: Instance, a: Assignment, max_nodes: int = DEFAULT_MAX_NODES) -> bool:
    if check_feasibility(inst, a):
        return False
    best = solve_exact(inst, max_nodes)
    return best is not None and objective(a) == objective(best)
