"""Greedy comparison solver, labelled ``greedy-baseline`` in experiment output.

AVs with longer windows go first; each parks its whole window at the
feasible facility whose still-unmet demand it covers most (nearest
facility, then lowest id, on ties).  The result is then repaired.
"""
from __future__ import annotations

import numpy as np

from .errors import RecoveryFailedError
from .instance import Instance
from .model import Assignment
from .recovery import recover_primal

NAME = "greedy-baseline"


def solve_greedy(inst: Instance):
    """Feasible assignment, or None if some AV cannot park or repair fails."""
    lo, hi = inst.windows
    feasible = inst.feasible
    if not feasible.any(axis=1).all():
        return None
    length = np.where(feasible, hi - lo + 1, 0)
    order = sorted(range(inst.K), key=lambda k: (-int(length[k].max()), k))
    counts = np.zeros((inst.F, inst.D + 1), dtype=int)
    facility = [None] * inst.K
    slots = [()] * inst.K
    for k in order:
        best = None
        for f in range(inst.F):
            if not feasible[k, f]:
                continue
            window = np.arange(int(lo[k, f]), int(hi[k, f]) + 1)
            unmet = np.maximum(inst.demand[f, window] - counts[f, window], 0).sum()
            key = (-int(unmet), float(inst.legs_km[k, f]), f)
            if best is None or key < best[0]:
                best = (key, f, window)
        _, f, window = best
        counts[f, window] += 1
        facility[k] = f
        slots[k] = tuple(int(t) for t in window)
    try:
        a, _ = recover_primal(inst, Assignment(tuple(facility), tuple(slots)))
    except RecoveryFailedError:
        return None
    return a
