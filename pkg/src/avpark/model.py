"""Constraint semantics of the coordinated parking ILP.

An :class:`Assignment` stores, for every AV, the chosen facility (or None)
and the set of slots it is parked there.  Rows (3)-(12) of the formulation
are checked by :func:`check_feasibility` and written out by
:func:`export_lp`.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .instance import Instance

ONE_FACILITY = "OneFacility"
MIN_STAY = "MinStay"
DISTANCE = "Distance"
WINDOW_BEFORE = "WindowBefore"
WINDOW_AFTER = "WindowAfter"
DEMAND_DEFICIT = "DemandDeficit"
CAPACITY_OVERFLOW = "CapacityOverflow"


@dataclass(frozen=True)
class Assignment:
    facility: tuple
    slots: tuple

    def __post_init__(self):
        facility = tuple(None if f is None else int(f) for f in self.facility)
        slots = tuple(tuple(sorted({int(t) for t in s})) for s in self.slots)
        if len(facility) != len(slots):
            raise ValueError("facility and slot lists must have one entry per AV")
        for k, (f, s) in enumerate(zip(facility, slots)):
            if f is None and s:
                raise ValueError(f"AV {k} has slots but no facility")
        object.__setattr__(self, "facility", facility)
        object.__setattr__(self, "slots", slots)

    @classmethod
    def empty(cls, n_avs: int) -> "Assignment":
        return cls((None,) * n_avs, ((),) * n_avs)

    @property
    def n_avs(self) -> int:
        return len(self.facility)

    def counts(self, n_facilities: int, D: int) -> np.ndarray:
        """(F, D + 1) parked-AV counts per facility and slot."""
        out = np.zeros((n_facilities, D + 1), dtype=int)
        for f, s in zip(self.facility, self.slots):
            if f is not None and s:
                out[f, list(s)] += 1
        return out

    def to_dense(self, n_facilities: int, D: int) -> np.ndarray:
        """Boolean x[k, f, t] tensor with t in 1..D stored at index t."""
        x = np.zeros((self.n_avs, n_facilities, D + 1), dtype=bool)
        for k, (f, s) in enumerate(zip(self.facility, self.slots)):
            if f is not None and s:
                x[k, f, list(s)] = True
        return x


@dataclass(frozen=True)
class Violation:
    kind: str
    subject: tuple
    magnitude: int


def objective(a: Assignment) -> int:
    return sum(len(s) for s in a.slots)


def feasible_window(k: int, f: int, inst: Instance) -> Optional[tuple]:
    """Slot interval ``(lo, hi)`` where AV k may park at f, or None if empty.

    The upper end is clipped to D when the AV returns after the horizon.
    """
    av = inst.avs[k]
    lo = max(av.t_start + int(inst.plans.m_to[k, f]), 1)
    hi = min(av.t_end - int(inst.plans.m_back[k, f]) - 1, inst.D)
    if lo > hi:
        return None
    return lo, hi


def facility_feasible(k: int, f: int, inst: Instance) -> bool:
    av = inst.avs[k]
    fac = inst.facilities[f]
    d = inst.distances
    if d[av.start_node, fac.node] + d[fac.node, av.return_node] > av.d_max:
        return False
    window = feasible_window(k, f, inst)
    stay = int(inst.plans.m_stay[k, f])
    return window is not None and stay >= 1 and window[1] - window[0] + 1 >= stay


def check_feasibility(inst: Instance, a: Assignment) -> list:
    if a.n_avs != inst.K:
        raise ValueError(f"assignment covers {a.n_avs} AVs, instance has {inst.K}")
    out = []
    for k, (f, slots) in enumerate(zip(a.facility, a.slots)):
        if f is None:
            out.append(Violation(ONE_FACILITY, (k,), 1))
            continue
        if not 0 <= f < inst.F:
            raise ValueError(f"AV {k}: facility {f} out of range")
        if slots and not (1 <= slots[0] and slots[-1] <= inst.D):
            raise ValueError(f"AV {k}: slot index outside 1..{inst.D}")
        av = inst.avs[k]
        stay = max(int(inst.plans.m_stay[k, f]), 1)
        if len(slots) < stay:
            out.append(Violation(MIN_STAY, (k,), stay - len(slots)))
        legs = float(inst.legs_km[k, f])
        if legs > av.d_max:
            out.append(Violation(DISTANCE, (k,), max(1, int(np.ceil(legs - av.d_max)))))
        lo = av.t_start + int(inst.plans.m_to[k, f])
        before = sum(1 for t in slots if t < lo)
        if before:
            out.append(Violation(WINDOW_BEFORE, (k,), before))
        end = av.t_end - int(inst.plans.m_back[k, f])
        if end <= inst.D:
            after = sum(1 for t in slots if t >= end)
            if after:
                out.append(Violation(WINDOW_AFTER, (k,), after))
    counts = a.counts(inst.F, inst.D)
    for f in range(inst.F):
        cap = int(inst.capacity[f])
        for t in range(1, inst.D + 1):
            n = int(counts[f, t])
            need = int(inst.demand[f, t])
            if n < need:
                out.append(Violation(DEMAND_DEFICIT, (f, t), need - n))
            if n > cap:
                out.append(Violation(CAPACITY_OVERFLOW, (f, t), n - cap))
    return out


def violations_csv(violations: Iterable[Violation]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kind", "subject", "magnitude"])
    for v in violations:
        w.writerow([v.kind, ":".join(str(x) for x in v.subject), v.magnitude])
    return buf.getvalue()


def big_m(inst: Instance) -> int:
    return inst.D + 1


def _fmt(x: float) -> str:
    x = float(x)
    if not np.isfinite(x):
        return "1e+30"
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


_TERMS_PER_LINE = 8


def _row(name: str, terms: list, tail: str) -> list:
    """One constraint or objective row, wrapped so no line gets long."""
    chunks = [" + ".join(terms[i:i + _TERMS_PER_LINE])
              for i in range(0, len(terms), _TERMS_PER_LINE)]
    lines = [f" {name}: {chunks[0]}"]
    lines += [f"   + {c}" for c in chunks[1:]]
    lines[-1] += tail
    return lines


def export_lp(inst: Instance) -> str:
    """Write the full ILP in CPLEX LP text format.

    Row name prefixes: ``one`` (3), ``stay_lo``/``stay_hi`` (4), ``dist`` (7),
    ``pre`` (10), ``post`` (11), ``dem``/``cap`` (12).  Rows whose sum would
    be empty are omitted.  Long rows continue on lines starting with ``+``.
    """
    K, F, D = inst.K, inst.F, inst.D

    def xs(k, f, slots):
        return [f"x_{k}_{f}_{t}" for t in slots]

    M = big_m(inst)
    slots = range(1, D + 1)
    lines = ["\\ Coordinated parking problem", f"\\ K={K} F={F} D={D}", "Maximize"]
    lines += _row("obj", [v for k in range(K) for f in range(F) for v in xs(k, f, slots)], "")
    lines.append("Subject To")
    for k in range(K):
        lines += _row(f"one_{k}", [f"y_{k}_{f}" for f in range(F)], " = 1")
    for k in range(K):
        for f in range(F):
            stay = max(int(inst.plans.m_stay[k, f]), 1)
            lines += _row(f"stay_lo_{k}_{f}", xs(k, f, slots), f" - {stay} y_{k}_{f} >= 0")
            lines += _row(f"stay_hi_{k}_{f}", xs(k, f, slots), f" - {M} y_{k}_{f} <= 0")
    for k, av in enumerate(inst.avs):
        for f in range(F):
            lines += _row(f"dist_{k}_{f}", [f"{_fmt(inst.legs_km[k, f])} y_{k}_{f}"],
                          f" <= {_fmt(av.d_max)}")
    for k, av in enumerate(inst.avs):
        for f in range(F):
            last = min(av.t_start - 1 + int(inst.plans.m_to[k, f]), D)
            if last >= 1:
                lines += _row(f"pre_{k}_{f}", xs(k, f, range(1, last + 1)), " = 0")
    for k, av in enumerate(inst.avs):
        for f in range(F):
            first = av.t_end - int(inst.plans.m_back[k, f])
            if first <= D:
                lines += _row(f"post_{k}_{f}", xs(k, f, range(max(first, 1), D + 1)), " = 0")
    for f in range(F):
        for t in slots:
            terms = [f"x_{k}_{f}_{t}" for k in range(K)]
            lines += _row(f"dem_{f}_{t}", terms, f" >= {int(inst.demand[f, t])}")
            lines += _row(f"cap_{f}_{t}", terms, f" <= {int(inst.capacity[f])}")
    lines.append("Binary")
    for k in range(K):
        for f in range(F):
            lines.append(f" y_{k}_{f}")
            lines += [f" {v}" for v in xs(k, f, slots)]
    lines.append("End")
    return "\n".join(lines) + "\n"
