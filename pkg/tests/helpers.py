"""Test-side builders and independent oracles.

Nothing here calls the solvers under test: the window rule, the exhaustive
assignment search and the LP row evaluator are written from the constraint
definitions directly.
"""
from __future__ import annotations

import itertools
import math
import re

import numpy as np

from avpark.instance import AvSpec, DistanceMatrix, FacilitySpec, Instance, TimeHorizon, TravelPlan


def _per_f(value, F):
    if isinstance(value, (list, tuple)):
        assert len(value) == F
        return list(value)
    return [value] * F


def build(D, avs, facilities, slot_minutes=1.2, d_max=math.inf):
    """Hand-made instance.

    ``avs``: dicts with ``t_start``, ``t_end`` and optional per-facility (or
    scalar) ``m_to``, ``m_back``, ``stay``, ``km`` (round trip), ``d_max``.
    ``facilities``: ``(demand list of length D, capacity)`` pairs.
    Node layout: facilities first, then one node per AV used as both start
    and return, half the round trip on each leg.
    """
    K, F = len(avs), len(facilities)
    n = F + K
    d = np.zeros((n, n))
    rows = {"m_to": [], "m_back": [], "e_to": [], "e_back": [], "m_stay": []}
    specs = []
    for k, spec in enumerate(avs):
        km = _per_f(spec.get("km", 0.0), F)
        for f in range(F):
            d[F + k, f] = d[f, F + k] = km[f] / 2
        rows["m_to"].append(_per_f(spec.get("m_to", 0), F))
        rows["m_back"].append(_per_f(spec.get("m_back", 0), F))
        rows["m_stay"].append(_per_f(spec.get("stay", 1), F))
        rows["e_to"].append([0.0] * F)
        rows["e_back"].append([0.0] * F)
        specs.append(AvSpec(k, F + k, F + k, spec["t_start"], spec["t_end"],
                            d_max=spec.get("d_max", d_max)))
    facs = [FacilitySpec(f, f, tuple(dem), cap) for f, (dem, cap) in enumerate(facilities)]
    plans = TravelPlan(*(np.array(rows[name], dtype=float if name.startswith("e") else int)
                         for name in ("m_to", "m_back", "e_to", "e_back", "m_stay")))
    return Instance(TimeHorizon(D, slot_minutes), DistanceMatrix(d), specs, facs, plans)


def window_by_constraints(inst, k, f):
    """Slots t where x_{kt}^f = 1 alone breaks neither the pre- nor post-travel rule."""
    av = inst.avs[k]
    m_to = int(inst.plans.m_to[k, f])
    m_back = int(inst.plans.m_back[k, f])
    ok = []
    for t in range(1, inst.D + 1):
        before = t <= av.t_start - 1 + m_to          # still travelling there
        after = t >= av.t_end - m_back                # already heading back
        if not before and not after:
            ok.append(t)
    return ok


def usable(inst, k, f):
    w = window_by_constraints(inst, k, f)
    stay = int(inst.plans.m_stay[k, f])
    return inst.legs_km[k, f] <= inst.avs[k].d_max and stay >= 1 and len(w) >= stay


def exhaustive_optimum(inst):
    """Best objective by enumerating every facility choice and slot subset.

    Returns None when no assignment satisfies every constraint.  Only for
    tiny instances (a handful of AVs, windows of a few slots).
    """
    K, F, D = inst.K, inst.F, inst.D
    per_av = []
    for k in range(K):
        options = []
        for f in range(F):
            if not usable(inst, k, f):
                continue
            w = window_by_constraints(inst, k, f)
            stay = int(inst.plans.m_stay[k, f])
            for r in range(stay, len(w) + 1):
                for s in itertools.combinations(w, r):
                    options.append((f, s))
        if not options:
            return None
        per_av.append(options)
    best = None
    cap = [fac.capacity for fac in inst.facilities]
    for combo in itertools.product(*per_av):
        count = np.zeros((F, D + 1), dtype=int)
        for f, s in combo:
            count[f, list(s)] += 1
        ok = all(fac.demand[t - 1] <= count[fac.id, t] <= cap[fac.id]
                 for fac in inst.facilities for t in range(1, D + 1))
        if ok:
            value = sum(len(s) for _, s in combo)
            if best is None or value > best:
                best = value
    return best


_ROW = re.compile(r"^\s*(\w+):\s*(.*)$")


def parse_lp(text):
    """{row name: (terms {var: coef}, sense, rhs)} plus the objective terms."""
    section, rows, current = None, {}, None
    objective = {}
    for line in text.splitlines():
        s = line.strip()
        if not s or s.startswith("\\"):
            continue
        if s in ("Maximize", "Subject To", "Binary", "End"):
            section = s
            continue
        if section not in ("Maximize", "Subject To"):
            continue
        m = _ROW.match(line)
        if m and not s.startswith("+"):
            current = m.group(1)
            body = m.group(2)
            rows[current] = body
        else:
            rows[current] += " " + s
    out = {}
    for name, body in rows.items():
        sense, rhs = None, 0.0
        for op in (">=", "<=", "="):
            if op in body:
                body, rhs = body.split(op)
                sense, rhs = op, float(rhs)
                break
        terms = {}
        for tok in re.split(r"\s*\+\s*", body.strip()):
            tok = tok.strip()
            if not tok:
                continue
            # "x - 3 y" arrives as one token
            parts = re.split(r"\s+(?=-)", tok)
            for part in parts:
                part = part.strip()
                sign = 1.0
                if part.startswith("-"):
                    sign, part = -1.0, part[1:].strip()
                bits = part.split()
                coef, var = (float(bits[0]), bits[1]) if len(bits) == 2 else (1.0, bits[0])
                terms[var] = terms.get(var, 0.0) + sign * coef
        if name == "obj":
            objective = terms
        else:
            out[name] = (terms, sense, rhs)
    return out, objective


def lp_values(inst, a):
    """0/1 values of every x and y variable for assignment ``a``."""
    vals = {}
    for k in range(inst.K):
        for f in range(inst.F):
            vals[f"y_{k}_{f}"] = 1.0 if a.facility[k] == f else 0.0
            for t in range(1, inst.D + 1):
                vals[f"x_{k}_{f}_{t}"] = 1.0 if a.facility[k] == f and t in a.slots[k] else 0.0
    return vals


def violated_rows(rows, vals):
    bad = []
    for name, (terms, sense, rhs) in rows.items():
        lhs = sum(c * vals[v] for v, c in terms.items())
        ok = {">=": lhs >= rhs - 1e-9, "<=": lhs <= rhs + 1e-9, "=": abs(lhs - rhs) <= 1e-9}[sense]
        if not ok:
            bad.append(name)
    return bad
