"""Road network, AVs, facilities and the slotted horizon.

Slots are numbered ``1..D``; index 0 is the assignment instant.  An AV with
availability ``[t_start, t_end)`` spends ``m_to`` slots driving to its
facility and ``m_back`` slots driving home, so it can be parked in
``[t_start + m_to, t_end - m_back - 1]`` (clipped to the horizon).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .errors import GenerationError, InvalidConfigError

# Guards ceil() against binary noise such as 5.000000000000001.
_CEIL_EPS = 1e-9

DEFAULT_BATTERY_KWH = 60.0
DEFAULT_CONSUMPTION = 0.15  # kWh/km
DEFAULT_CHARGE_RATE = 7.2  # kW


def _ceil(x: float) -> int:
    return math.ceil(x - _CEIL_EPS)


@dataclass(frozen=True)
class TimeHorizon:
    D: int
    slot_minutes: float

    def __post_init__(self):
        if int(self.D) != self.D or self.D < 1:
            raise InvalidConfigError(f"horizon needs D >= 1, got {self.D}")
        if not self.slot_minutes > 0:
            raise InvalidConfigError(f"slot length must be positive, got {self.slot_minutes}")

    @property
    def slot_hours(self) -> float:
        return self.slot_minutes / 60.0

    @property
    def minutes(self) -> float:
        return self.D * self.slot_minutes


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Complete directed graph; ``d[i, j]`` is the km travelled from i to j."""

    d: np.ndarray
    coords: Optional[np.ndarray] = None

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise InvalidConfigError("distance matrix must be square")
        if np.any(d < 0) or np.any(np.diag(d) != 0):
            raise InvalidConfigError("distances must be nonnegative with a zero diagonal")
        d.setflags(write=False)
        object.__setattr__(self, "d", d)

    @classmethod
    def euclidean(cls, coords) -> "DistanceMatrix":
        xy = np.asarray(coords, dtype=float)
        diff = xy[:, None, :] - xy[None, :, :]
        d = np.hypot(diff[..., 0], diff[..., 1])
        xy = xy.copy()
        xy.setflags(write=False)
        return cls(d, xy)

    @property
    def n_nodes(self) -> int:
        return self.d.shape[0]

    def __getitem__(self, ij):
        return float(self.d[ij])


@dataclass(frozen=True)
class AvSpec:
    id: int
    start_node: int
    return_node: int
    t_start: int
    t_end: int
    soc_start: float = 0.0
    soc_return: float = 0.0
    d_max: float = math.inf
    speed: float = 30.0
    consumption: float = DEFAULT_CONSUMPTION
    battery_kwh: float = DEFAULT_BATTERY_KWH

    def __post_init__(self):
        if self.t_start < 0 or self.t_end < self.t_start:
            raise InvalidConfigError(f"AV {self.id}: need 0 <= t_start <= t_end")
        if not self.d_max > 0 or not self.speed > 0:
            raise InvalidConfigError(f"AV {self.id}: d_max and speed must be positive")
        for soc in (self.soc_start, self.soc_return):
            if not 0 <= soc <= self.battery_kwh:
                raise InvalidConfigError(f"AV {self.id}: SOC outside [0, battery]")


@dataclass(frozen=True)
class FacilitySpec:
    id: int
    node: int
    demand: tuple
    capacity: int
    charge_rate: float = DEFAULT_CHARGE_RATE

    def __post_init__(self):
        demand = tuple(int(x) for x in self.demand)
        object.__setattr__(self, "demand", demand)
        if self.capacity < 0 or any(x < 0 for x in demand):
            raise InvalidConfigError(f"facility {self.id}: negative demand or capacity")
        if any(x > self.capacity for x in demand):
            raise InvalidConfigError(
                f"facility {self.id}: demand exceeds capacity {self.capacity}"
            )


@dataclass(frozen=True, eq=False)
class TravelPlan:
    """Per-(AV, facility) travel table.

    ``m_stay[k, f] == 0`` marks a facility whose window is empty for ``k``;
    the required stay is undefined there.
    """

    m_to: np.ndarray
    m_back: np.ndarray
    e_to: np.ndarray
    e_back: np.ndarray
    m_stay: np.ndarray

    def __post_init__(self):
        for name, dtype in (("m_to", int), ("m_back", int), ("m_stay", int),
                            ("e_to", float), ("e_back", float)):
            arr = np.array(getattr(self, name), dtype=dtype)
            if arr.ndim != 2:
                raise InvalidConfigError(f"plan table {name} must be 2-D")
            if np.any(arr < 0):
                raise InvalidConfigError(f"plan table {name} has negative entries")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        shapes = {getattr(self, n).shape for n in ("m_to", "m_back", "e_to", "e_back", "m_stay")}
        if len(shapes) != 1:
            raise InvalidConfigError("plan tables disagree in shape")

    @property
    def shape(self):
        return self.m_to.shape


@dataclass(frozen=True, eq=False)
class Instance:
    horizon: TimeHorizon
    distances: DistanceMatrix
    avs: tuple
    facilities: tuple
    plans: TravelPlan
    rng_seed: Optional[int] = None
    travel_mode: str = "per-facility"

    def __post_init__(self):
        object.__setattr__(self, "avs", tuple(self.avs))
        object.__setattr__(self, "facilities", tuple(self.facilities))
        n = self.distances.n_nodes
        for i, av in enumerate(self.avs):
            if av.id != i:
                raise InvalidConfigError("AV ids must be 0..K-1 in order")
            if not (0 <= av.start_node < n and 0 <= av.return_node < n):
                raise InvalidConfigError(f"AV {i}: node index out of range")
        for j, fac in enumerate(self.facilities):
            if fac.id != j:
                raise InvalidConfigError("facility ids must be 0..F-1 in order")
            if not 0 <= fac.node < n:
                raise InvalidConfigError(f"facility {j}: node index out of range")
            if len(fac.demand) != self.horizon.D:
                raise InvalidConfigError(f"facility {j}: demand profile must have D entries")
        if self.plans.shape != (len(self.avs), len(self.facilities)):
            raise InvalidConfigError("plan table must cover every (AV, facility) pair")
        if self.travel_mode not in ("per-facility", "uniform"):
            raise InvalidConfigError(f"unknown travel mode {self.travel_mode!r}")

    @property
    def K(self) -> int:
        return len(self.avs)

    @property
    def F(self) -> int:
        return len(self.facilities)

    @property
    def D(self) -> int:
        return self.horizon.D

    @cached_property
    def demand(self) -> np.ndarray:
        """(F, D + 1) demand array; column 0 is the unused pre-horizon slot."""
        arr = np.zeros((self.F, self.D + 1), dtype=int)
        for f in self.facilities:
            arr[f.id, 1:] = f.demand
        arr.setflags(write=False)
        return arr

    @cached_property
    def capacity(self) -> np.ndarray:
        arr = np.array([f.capacity for f in self.facilities], dtype=int)
        arr.setflags(write=False)
        return arr

    @cached_property
    def legs_km(self) -> np.ndarray:
        """(K, F) round-trip distance start -> facility -> return."""
        d = self.distances.d
        out = np.empty((self.K, self.F))
        for av in self.avs:
            for fac in self.facilities:
                out[av.id, fac.id] = d[av.start_node, fac.node] + d[fac.node, av.return_node]
        out.setflags(write=False)
        return out

    @cached_property
    def windows(self) -> tuple:
        """(lo, hi) arrays of shape (K, F); the window is empty when lo > hi."""
        t_start = np.array([av.t_start for av in self.avs], dtype=int)[:, None]
        t_end = np.array([av.t_end for av in self.avs], dtype=int)[:, None]
        lo = np.maximum(t_start + self.plans.m_to, 1)
        hi = np.minimum(t_end - self.plans.m_back - 1, self.D)
        lo.setflags(write=False)
        hi.setflags(write=False)
        return lo, hi

    @cached_property
    def feasible(self) -> np.ndarray:
        """(K, F) mask of facilities each AV can use at all (distance and stay)."""
        lo, hi = self.windows
        length = np.maximum(hi - lo + 1, 0)
        stay = self.plans.m_stay
        mask = (self.legs_km <= np.array([av.d_max for av in self.avs])[:, None]) \
            & (stay >= 1) & (length >= stay)
        mask.setflags(write=False)
        return mask


@dataclass(frozen=True)
class GeneratorConfig:
    n_avs: int
    n_facilities: int
    D: int = 100
    horizon_minutes: float = 120.0
    area_km: float = 5.0
    speed_kmh: float = 30.0
    dmax_range_km: tuple = (4.0, 5.0)
    capacity_rule: object = "half"
    seed: Optional[int] = None
    beta_mode: str = "random"
    travel_mode: str = "per-facility"
    consumption: float = DEFAULT_CONSUMPTION
    battery_kwh: float = DEFAULT_BATTERY_KWH
    charge_rate: float = DEFAULT_CHARGE_RATE
    max_rejections: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "dmax_range_km", tuple(float(x) for x in self.dmax_range_km))
        if self.seed is None:
            raise InvalidConfigError("a seed is required; generation must be reproducible")
        if min(self.n_avs, self.n_facilities, self.D) < 1:
            raise InvalidConfigError("n_avs, n_facilities and D must all be >= 1")
        if not self.area_km > 0:
            raise InvalidConfigError("area must be positive")
        if not self.speed_kmh > 0:
            raise InvalidConfigError("speed must be positive")
        if not self.horizon_minutes > 0:
            raise InvalidConfigError("horizon length must be positive")
        lo, hi = self.dmax_range_km
        if not 0 < lo <= hi:
            raise InvalidConfigError("dmax range must satisfy 0 < lo <= hi")
        if self.beta_mode not in ("random", "charging"):
            raise InvalidConfigError(f"unknown beta mode {self.beta_mode!r}")
        if self.travel_mode not in ("per-facility", "uniform"):
            raise InvalidConfigError(f"unknown travel mode {self.travel_mode!r}")
        self.capacity()

    def capacity(self) -> int:
        rule = self.capacity_rule
        if rule == "half":
            return math.ceil(self.n_avs / 2)
        if isinstance(rule, (int, np.integer)) and not isinstance(rule, bool) and rule >= 0:
            return int(rule)
        raise InvalidConfigError(f"capacity rule must be 'half' or a count, got {rule!r}")


def travel_slots(av: AvSpec, fac: FacilitySpec, horizon: TimeHorizon,
                 distances: DistanceMatrix) -> tuple:
    """Slots and energy for the two legs: ``(m_to, m_back, e_to, e_back)``."""
    d_to = distances[av.start_node, fac.node]
    d_back = distances[fac.node, av.return_node]
    m_to = _drive_slots(d_to, av.speed, horizon.slot_minutes)
    m_back = _drive_slots(d_back, av.speed, horizon.slot_minutes)
    return m_to, m_back, d_to * av.consumption, d_back * av.consumption


def _drive_slots(km: float, speed_kmh: float, slot_minutes: float) -> int:
    return max(_ceil(km / speed_kmh * 60.0 / slot_minutes), 0)


def window_length(av: AvSpec, m_to: int, m_back: int, D: int) -> int:
    lo = max(av.t_start + m_to, 1)
    hi = min(av.t_end - m_back - 1, D)
    return max(hi - lo + 1, 0)


def required_stay(av: AvSpec, fac: FacilitySpec, horizon: TimeHorizon, legs: Sequence,
                  mode: str = "random", rng: Optional[np.random.Generator] = None) -> Optional[int]:
    """Slots AV ``av`` must stay at ``fac``; None when its window there is empty.

    ``random`` draws uniformly from ``1..window length`` using ``rng``;
    ``charging`` returns the slots needed to lift the SOC from arrival level
    to departure level at the facility's charge rate.
    """
    m_to, m_back, e_to, e_back = legs
    length = window_length(av, m_to, m_back, horizon.D)
    if length < 1:
        return None
    if mode == "random":
        if rng is None:
            raise InvalidConfigError("random stay mode needs an rng")
        return int(rng.integers(1, length, endpoint=True))
    if mode == "charging":
        arrive = av.soc_start - e_to
        leave = av.soc_return + e_back
        need = max(0.0, leave - arrive)
        return max(1, _ceil(need / (fac.charge_rate * horizon.slot_hours)))
    raise InvalidConfigError(f"unknown beta mode {mode!r}")


def generate_instance(cfg: GeneratorConfig) -> Instance:
    rng = np.random.default_rng(cfg.seed)
    K, F, D = cfg.n_avs, cfg.n_facilities, cfg.D
    horizon = TimeHorizon(D, cfg.horizon_minutes / D)
    cap = cfg.capacity()

    # node layout: facilities, then AV start nodes, then AV return nodes
    coords = np.empty((F + 2 * K, 2))
    coords[:F] = rng.uniform(0.0, cfg.area_km, size=(F, 2))
    fac_nodes = list(range(F))
    placeholder = [FacilitySpec(f, f, (0,) * D, cap, cfg.charge_rate) for f in range(F)]

    avs, rows = [], []
    for k in range(K):
        for _ in range(cfg.max_rejections):
            drawn = _draw_av(rng, cfg, k, F, horizon, coords[:F], placeholder)
            if drawn is not None:
                break
        else:
            raise GenerationError(
                f"{cfg.max_rejections} consecutive AV samples had no feasible facility"
            )
        start_xy, return_xy, av, row = drawn
        coords[F + k] = start_xy
        coords[F + K + k] = return_xy
        avs.append(av)
        rows.append(row)

    distances = DistanceMatrix.euclidean(coords)
    plans = TravelPlan(*(np.array([r[i] for r in rows]) for i in range(5)))

    # demand: rand(0, a_t^f / |F|), where a_t^f counts AVs able to park at f in t
    probe = Instance(horizon, distances, avs, placeholder, plans, cfg.seed, cfg.travel_mode)
    lo, hi = probe.windows
    slots = np.arange(1, D + 1)
    covered = probe.feasible[:, :, None] & (lo[:, :, None] <= slots) & (slots <= hi[:, :, None])
    available = covered.sum(axis=0)  # (F, D)
    upper = np.minimum(available // F, cap)
    demand = rng.integers(0, upper, endpoint=True)
    facilities = [
        FacilitySpec(f, fac_nodes[f], tuple(int(x) for x in demand[f]), cap, cfg.charge_rate)
        for f in range(F)
    ]
    return Instance(horizon, distances, avs, facilities, plans, cfg.seed, cfg.travel_mode)


def _draw_av(rng, cfg, k, F, horizon, fac_xy, facilities):
    """One candidate AV, or None if it has no feasible facility."""
    start_xy = rng.uniform(0.0, cfg.area_km, size=2)
    return_xy = rng.uniform(0.0, cfg.area_km, size=2)
    d_max = float(rng.uniform(*cfg.dmax_range_km))
    soc_start = float(rng.uniform(0.3, 0.9)) * cfg.battery_kwh
    soc_return = float(rng.uniform(0.3, 0.9)) * cfg.battery_kwh

    d_to = np.hypot(*(fac_xy - start_xy).T)
    d_back = np.hypot(*(return_xy - fac_xy).T)
    reachable = d_to + d_back <= d_max
    if not reachable.any():
        return None
    m_to = np.array([_drive_slots(x, cfg.speed_kmh, horizon.slot_minutes) for x in d_to])
    m_back = np.array([_drive_slots(x, cfg.speed_kmh, horizon.slot_minutes) for x in d_back])
    mt, mb = int(m_to[reachable].max()), int(m_back[reachable].max())
    span = horizon.D - mt - mb
    if span < 0:
        return None
    t_start = int(rng.integers(0, span, endpoint=True))
    t_end = int(rng.integers(0, span, endpoint=True)) + t_start + mt + mb
    if cfg.travel_mode == "uniform":
        m_to = np.full(F, mt)
        m_back = np.full(F, mb)

    av = AvSpec(k, 0, 0, t_start, t_end, soc_start, soc_return, d_max,
                cfg.speed_kmh, cfg.consumption, cfg.battery_kwh)
    e_to = d_to * cfg.consumption
    e_back = d_back * cfg.consumption
    stay = np.zeros(F, dtype=int)
    for f in range(F):
        if not reachable[f]:
            continue
        legs = (int(m_to[f]), int(m_back[f]), float(e_to[f]), float(e_back[f]))
        m = required_stay(av, facilities[f], horizon, legs, cfg.beta_mode, rng)
        if m is not None:
            stay[f] = m
    lengths = np.array([window_length(av, m_to[f], m_back[f], horizon.D) for f in range(F)])
    if not np.any(reachable & (stay >= 1) & (lengths >= stay)):
        return None
    av = replace(av, start_node=F + k, return_node=F + cfg.n_avs + k)
    return start_xy, return_xy, av, (m_to, m_back, e_to, e_back, stay)


def rescale_time(inst: Instance, new_D: int) -> Instance:
    """Re-express ``inst`` on ``new_D`` slots spanning the same real-time horizon.

    Travel legs are re-derived from distances; availability start maps to the
    first coarse slot that begins no earlier than the fine one, availability
    end maps by ``floor``; stays round up and each coarse demand is the
    maximum over the fine slots it overlaps.  The result may be infeasible.
    """
    if int(new_D) != new_D or new_D < 1:
        raise InvalidConfigError(f"new_D must be >= 1, got {new_D}")
    D = inst.D
    if new_D > D:
        raise InvalidConfigError(f"cannot refine {D} slots into {new_D}")
    if new_D == D:
        return inst
    horizon = TimeHorizon(new_D, inst.horizon.slot_minutes * D / new_D)

    avs = []
    for av in inst.avs:
        # first coarse slot starting no earlier than the fine slot t_start, i.e.
        # ceil((t - 1) * new_D / D) + 1; the end maps by floor(t * new_D / D)
        t_start = -((-(av.t_start - 1) * new_D) // D) + 1
        t_end = max((av.t_end * new_D) // D, t_start)
        avs.append(replace(av, t_start=t_start, t_end=t_end))

    facilities = []
    for fac in inst.facilities:
        demand = []
        for j in range(1, new_D + 1):
            # fine slot s overlaps coarse slot j iff (s-1)*new_D < j*D and (j-1)*D < s*new_D
            s_lo = ((j - 1) * D) // new_D + 1
            s_hi = -((-j * D) // new_D)
            demand.append(max(fac.demand[s - 1] for s in range(s_lo, s_hi + 1)))
        facilities.append(replace(fac, demand=tuple(demand)))

    K, F = inst.K, inst.F
    m_to = np.zeros((K, F), dtype=int)
    m_back = np.zeros((K, F), dtype=int)
    for av in avs:
        for fac in facilities:
            m_to[av.id, fac.id], m_back[av.id, fac.id], _, _ = travel_slots(
                av, fac, horizon, inst.distances)
    if inst.travel_mode == "uniform":
        reach = inst.legs_km <= np.array([av.d_max for av in avs])[:, None]
        for k in range(K):
            if reach[k].any():
                m_to[k] = m_to[k][reach[k]].max()
                m_back[k] = m_back[k][reach[k]].max()
    stay = -((-inst.plans.m_stay * new_D) // D)
    plans = TravelPlan(m_to, m_back, inst.plans.e_to, inst.plans.e_back, stay)
    return Instance(horizon, inst.distances, avs, facilities, plans, inst.rng_seed,
                    inst.travel_mode)


def map_slot(t: int, D: int, new_D: int) -> int:
    """Coarse slot containing fine slot ``t``: ``ceil(t * new_D / D)``."""
    return -((-t * new_D) // D)
