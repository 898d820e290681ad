"""Per-AV pricing subproblem.

Given shadow prices, AV ``k`` picks one feasible facility and a slot set of
at least the required stay inside its window, maximising the sum of slot
coefficients ``1 - lambda_hi + lambda_lo``.  For a fixed facility this is
solved exactly by taking every nonnegative slot and topping up with the
best negative ones; the facility is then the argmax.

Ties: zero-coefficient slots are always taken, equal coefficients prefer
the lower slot, equal facility values prefer the lower facility id.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import AvInfeasibleError, OracleLimitError
from .instance import Instance

BRUTE_WINDOW_LIMIT = 20


@dataclass(frozen=True, eq=False)
class PriceVector:
    """Shadow prices, each of shape (F, D + 1); column 0 is unused."""

    lambda_hi: np.ndarray
    lambda_lo: np.ndarray

    def __post_init__(self):
        hi = np.array(self.lambda_hi, dtype=float)
        lo = np.array(self.lambda_lo, dtype=float)
        if hi.shape != lo.shape or hi.ndim != 2:
            raise ValueError("price arrays must share one 2-D shape")
        if np.any(hi < 0) or np.any(lo < 0) or not (np.all(np.isfinite(hi))
                                                     and np.all(np.isfinite(lo))):
            raise ValueError("prices must be finite and nonnegative")
        hi.setflags(write=False)
        lo.setflags(write=False)
        object.__setattr__(self, "lambda_hi", hi)
        object.__setattr__(self, "lambda_lo", lo)

    @classmethod
    def zeros(cls, n_facilities: int, D: int) -> "PriceVector":
        return cls(np.zeros((n_facilities, D + 1)), np.zeros((n_facilities, D + 1)))

    def coefficients(self) -> np.ndarray:
        return 1.0 - self.lambda_hi + self.lambda_lo

    def __eq__(self, other):
        if not isinstance(other, PriceVector):
            return NotImplemented
        return (np.array_equal(self.lambda_hi, other.lambda_hi)
                and np.array_equal(self.lambda_lo, other.lambda_lo))

    __hash__ = None


@dataclass(frozen=True)
class SubproblemResult:
    av: int
    facility: int
    slots: tuple
    value: float


def slot_coefficient(f: int, t: int, prices: PriceVector) -> float:
    return 1.0 - float(prices.lambda_hi[f, t]) + float(prices.lambda_lo[f, t])


def _exact_sum(values) -> Fraction:
    return sum((Fraction(float(v)) for v in values), Fraction(0))


def _facility_best(coef: np.ndarray, lo: int, hi: int, stay: int):
    w = coef[lo:hi + 1]
    nonneg = np.flatnonzero(w >= 0.0)
    if len(nonneg) >= stay:
        idx = nonneg
    else:
        # stable sort on -w keeps equal coefficients in slot order
        order = np.argsort(-w, kind="stable")
        idx = np.sort(order[:stay])
    vals = w[idx].tolist()
    return idx + lo, vals


def solve_subproblem(k: int, inst: Instance, prices: PriceVector,
                     coef: np.ndarray | None = None) -> SubproblemResult:
    """Exact maximiser of AV ``k``'s pricing problem.

    ``coef`` may carry precomputed ``prices.coefficients()`` when many AVs
    are solved against the same prices.
    """
    if coef is None:
        coef = prices.coefficients()
    lo_all, hi_all = inst.windows
    feasible = inst.feasible[k]
    best = None
    for f in range(inst.F):
        if not feasible[f]:
            continue
        slots, vals = _facility_best(coef[f], int(lo_all[k, f]), int(hi_all[k, f]),
                                     int(inst.plans.m_stay[k, f]))
        value = math.fsum(vals)
        if best is None or value > best[0]:
            best = (value, f, slots, vals)
        elif value == best[0] and _exact_sum(vals) > _exact_sum(best[3]):
            # fsum rounds; only a strictly larger exact sum may displace a lower id
            best = (value, f, slots, vals)
    if best is None:
        raise AvInfeasibleError(k)
    value, f, slots, _ = best
    return SubproblemResult(k, f, tuple(int(t) for t in slots), value)


@lru_cache(maxsize=None)
def _subset_masks(n: int) -> np.ndarray:
    """(2**n, n) 0/1 matrix; row r is the binary expansion of r, bit j = slot j."""
    r = np.arange(2 ** n, dtype=np.int64)[:, None]
    return ((r >> np.arange(n)) & 1).astype(np.int8)


def _brute_facility(w: np.ndarray, stay: int):
    """Best subset of ``w`` with at least ``stay`` members, by exhaustive search.

    Order: exact value, then cardinality, then lexicographically smallest
    sorted index tuple.
    """
    n = len(w)
    masks = _subset_masks(n)
    sizes = masks.sum(axis=1)
    ok = sizes >= stay
    approx = masks[ok].astype(float) @ w
    top = approx.max()
    # float sums may misorder near-ties; settle the candidates exactly
    near = np.flatnonzero(approx >= top - 1e-9 * max(1.0, abs(top)))
    rows = masks[ok][near]
    best_key, best_idx = None, None
    for row in rows:
        idx = tuple(int(j) for j in np.flatnonzero(row))
        key = (_exact_sum(w[list(idx)]), len(idx), tuple(-j for j in idx))
        if best_key is None or key > best_key:
            best_key, best_idx = key, idx
    return best_idx, best_key[0]


def brute_subproblem(k: int, inst: Instance, prices: PriceVector) -> SubproblemResult:
    """Enumerate every (facility, slot subset) for AV ``k``; testing oracle."""
    coef = prices.coefficients()
    lo_all, hi_all = inst.windows
    best = None
    for f in range(inst.F):
        if not inst.feasible[k, f]:
            continue
        lo, hi = int(lo_all[k, f]), int(hi_all[k, f])
        if hi - lo + 1 > BRUTE_WINDOW_LIMIT:
            raise OracleLimitError(
                f"window of AV {k} at facility {f} has {hi - lo + 1} slots "
                f"(limit {BRUTE_WINDOW_LIMIT})")
        w = coef[f, lo:hi + 1]
        idx, exact = _brute_facility(w, int(inst.plans.m_stay[k, f]))
        if best is None or exact > best[0]:
            best = (exact, f, tuple(lo + j for j in idx))
    if best is None:
        raise AvInfeasibleError(k)
    _, f, slots = best
    value = math.fsum(float(coef[f, t]) for t in slots)
    return SubproblemResult(k, f, slots, value)


def results_csv_rows(results) -> list:
    return [[r.av, r.facility, " ".join(str(t) for t in r.slots), repr(r.value)]
            for r in results]
