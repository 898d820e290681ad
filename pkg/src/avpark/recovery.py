"""Turn the union of per-AV subproblem answers into a feasible assignment.

Repair alternates two rules until no demand deficit or capacity overflow
is left:

* deficit: at the (facility, slot) with the largest shortfall, move in the
  "free" AV with the longest possible stay there and park it over its whole
  window;
* overflow: at the (facility, slot) with the largest excess, take the free
  AV with the shortest possible stay and drop its overflowed slots, or
  move it to another facility when it cannot lose any slot.

An AV is free when lifting it out of its facility leaves every slot it
occupied at or above demand.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import RecoveryFailedError
from .instance import Instance
from .model import Assignment, check_feasibility

DEFICIT_MOVE = "DeficitMove"
OVERFLOW_REMOVE = "OverflowRemove"
REASSIGN = "Reassign"


@dataclass(frozen=True)
class RepairMove:
    kind: str
    av: int
    from_facility: object
    to_facility: int
    removed: tuple
    added: tuple


@dataclass(frozen=True)
class RepairTrace:
    """Moves applied so far; ``failure`` describes the step repair gave up on."""

    moves: tuple = ()
    failure: str | None = None

    def __len__(self):
        return len(self.moves)

    def entries(self) -> list:
        """Moves followed by the failure note, if any."""
        return list(self.moves) + ([self.failure] if self.failure else [])

    def replay(self, a0: Assignment) -> Assignment:
        facility = list(a0.facility)
        slots = [set(s) for s in a0.slots]
        for m in self.moves:
            if facility[m.av] != m.from_facility:
                raise ValueError(f"move {m} does not start from AV {m.av}'s facility")
            slots[m.av] = (slots[m.av] - set(m.removed)) | set(m.added)
            facility[m.av] = m.to_facility
        return Assignment(tuple(facility), tuple(tuple(s) for s in slots))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "kind", "av", "from", "to", "removed", "added"])
        for i, m in enumerate(self.moves):
            w.writerow([i, m.kind, m.av, "" if m.from_facility is None else m.from_facility,
                        m.to_facility, " ".join(map(str, m.removed)),
                        " ".join(map(str, m.added))])
        if self.failure:
            w.writerow([len(self.moves), "Failed", "", "", "", "", self.failure])
        return buf.getvalue()


class _State:
    def __init__(self, inst: Instance, a0: Assignment):
        if a0.n_avs != inst.K:
            raise ValueError(f"assignment covers {a0.n_avs} AVs, instance has {inst.K}")
        self.inst = inst
        self.facility = list(a0.facility)
        self.slots = [set(s) for s in a0.slots]
        self.counts = a0.counts(inst.F, inst.D)
        self.demand = inst.demand
        self.cap = inst.capacity[:, None]
        self.lo, self.hi = inst.windows
        t_start = np.array([av.t_start for av in inst.avs])[:, None]
        t_end = np.array([av.t_end for av in inst.avs])[:, None]
        # possible stay as t_end - m_back - (t_start + m_to), unclipped
        self.possible_stay = t_end - inst.plans.m_back - (t_start + inst.plans.m_to)

    def apply(self, move: RepairMove) -> None:
        k = move.av
        if move.from_facility is not None and move.removed:
            self.counts[move.from_facility, list(move.removed)] -= 1
        if move.added:
            self.counts[move.to_facility, list(move.added)] += 1
        self.slots[k] = (self.slots[k] - set(move.removed)) | set(move.added)
        self.facility[k] = move.to_facility

    def removable_without_deficit(self, k: int) -> bool:
        f = self.facility[k]
        if f is None:
            return True
        return all(self.counts[f, t] - 1 >= self.demand[f, t] for t in self.slots[k])

    def assignment(self) -> Assignment:
        return Assignment(tuple(self.facility), tuple(tuple(s) for s in self.slots))


def _deficit_move(st: _State, f: int, t: int):
    inst = st.inst
    best = None
    for k in range(inst.K):
        if not inst.feasible[k, f] or not st.lo[k, f] <= t <= st.hi[k, f]:
            continue
        if st.facility[k] == f:
            if t in st.slots[k]:
                continue
        elif not st.removable_without_deficit(k):
            continue
        stay = int(st.possible_stay[k, f])
        if best is None or stay > best[0]:
            best = (stay, k)
    if best is None:
        return None
    k = best[1]
    window = tuple(range(int(st.lo[k, f]), int(st.hi[k, f]) + 1))
    return RepairMove(DEFICIT_MOVE, k, st.facility[k], f,
                      tuple(sorted(st.slots[k])), window)


def _shrink(st: _State, k: int, f: int, t: int):
    need = max(int(st.inst.plans.m_stay[k, f]), 1)
    spare = len(st.slots[k]) - need
    if spare < 1:
        return None
    over = [s for s in st.slots[k] if s != t and st.counts[f, s] > st.cap[f, 0]]
    over.sort(key=lambda s: (-(st.counts[f, s] - st.cap[f, 0]), s))
    removed = tuple(sorted([t] + over[:spare - 1]))
    return RepairMove(OVERFLOW_REMOVE, k, f, f, removed, ())


def _reassign(st: _State, k: int, f: int):
    inst = st.inst
    best = None
    for g in range(inst.F):
        if g == f or not inst.feasible[k, g]:
            continue
        need = int(inst.plans.m_stay[k, g])
        window = range(int(st.lo[k, g]), int(st.hi[k, g]) + 1)
        chosen = sorted(window, key=lambda s: (st.counts[g, s], s))[:need]
        full = sum(1 for s in chosen if st.counts[g, s] >= st.cap[g, 0])
        load = sum(int(st.counts[g, s]) for s in chosen)
        key = (full, load, g)
        if best is None or key < best[0]:
            best = (key, g, tuple(sorted(chosen)))
    if best is None:
        return None
    _, g, chosen = best
    return RepairMove(REASSIGN, k, f, g, tuple(sorted(st.slots[k])), chosen)


def _overflow_move(st: _State, f: int, t: int):
    parked = [k for k in range(st.inst.K) if st.facility[k] == f and t in st.slots[k]]
    parked.sort(key=lambda k: (int(st.possible_stay[k, f]), k))
    free = [k for k in parked if st.removable_without_deficit(k)]
    for k in free:
        move = _shrink(st, k, f, t) or _reassign(st, k, f)
        if move is not None:
            return move
    # dropping only overflowed slots never opens a deficit, so any parked AV may shrink
    for k in parked:
        if k not in free:
            move = _shrink(st, k, f, t)
            if move is not None:
                return move
    return None


def recover_primal(inst: Instance, a0: Assignment, max_moves: int | None = None):
    """Repair ``a0`` into a feasible assignment; returns ``(assignment, trace)``.

    Raises :class:`RecoveryFailedError` (carrying the partial trace) when no
    free AV exists for a violated slot, the move budget ``K * F * D`` runs
    out, or the result still violates a per-AV constraint.
    """
    st = _State(inst, a0)
    if max_moves is None:
        max_moves = inst.K * inst.F * inst.D
    moves = []
    while True:
        deficit = st.demand[:, 1:] - st.counts[:, 1:]
        overflow = st.counts[:, 1:] - st.cap
        if deficit.max() > 0:
            f, j = np.unravel_index(int(np.argmax(deficit)), deficit.shape)
            move = _deficit_move(st, int(f), int(j) + 1)
            kind = "deficit"
        elif overflow.max() > 0:
            f, j = np.unravel_index(int(np.argmax(overflow)), overflow.shape)
            move = _overflow_move(st, int(f), int(j) + 1)
            kind = "overflow"
        else:
            break
        where = (kind, int(f), int(j) + 1)
        if move is None:
            msg = f"no free AV to fix {kind} at facility {where[1]}, slot {where[2]}"
            raise RecoveryFailedError(msg, RepairTrace(tuple(moves), msg), where)
        if len(moves) >= max_moves:
            msg = f"repair exceeded {max_moves} moves"
            raise RecoveryFailedError(msg, RepairTrace(tuple(moves), msg), where)
        st.apply(move)
        moves.append(move)
    result = st.assignment()
    violations = check_feasibility(inst, result)
    if violations:
        msg = f"repaired assignment still has {len(violations)} violations"
        raise RecoveryFailedError(msg, RepairTrace(tuple(moves), msg), None, violations)
    return result, RepairTrace(tuple(moves))
