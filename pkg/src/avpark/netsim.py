"""Round-based lossy message passing between the control center and the AVs.

Every packet is dropped independently with probability ``drop_prob``.  The
decision for a packet is a pure function of ``(seed, round, direction,
endpoint)`` so any round can be replayed on its own.  A receiver whose
packet was dropped keeps computing on the last value it received.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

DOWNLINK = 0  # control center -> AV (prices)
UPLINK = 1  # AV -> control center (subproblem result)

_DIRECTION_NAMES = {DOWNLINK: "down", UPLINK: "up"}


@dataclass(frozen=True)
class ChannelModel:
    drop_prob: float = 0.0
    per_round_delay_ms: float = 200.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.drop_prob <= 1.0:
            raise ValueError(f"drop probability must lie in [0, 1], got {self.drop_prob}")
        if self.per_round_delay_ms < 0:
            raise ValueError("delay must be nonnegative")


def packet_uniform(seed: int, round_index: int, direction: int, endpoint: int) -> float:
    """Deterministic U[0, 1) draw for one packet."""
    key = struct.pack("<qqqq", seed, round_index, direction, endpoint)
    digest = hashlib.blake2b(key, digest_size=8).digest()
    return (int.from_bytes(digest, "little") >> 11) * (1.0 / (1 << 53))


def is_dropped(channel: ChannelModel, round_index: int, direction: int, endpoint: int) -> bool:
    if channel.drop_prob <= 0.0:
        return False
    if channel.drop_prob >= 1.0:
        return True
    return packet_uniform(channel.seed, round_index, direction, endpoint) < channel.drop_prob


class Mailbox:
    """Last value received per endpoint, stamped with the round it was sent in."""

    def __init__(self, initial: dict):
        self._values = dict(initial)
        self._stamps = {e: -1 for e in initial}

    def __getitem__(self, endpoint):
        return self._values[endpoint]

    def stamp(self, endpoint) -> int:
        return self._stamps[endpoint]

    def put(self, endpoint, value, round_index: int) -> None:
        if round_index < self._stamps[endpoint]:
            raise ValueError("mailbox stamps never go backwards")
        self._values[endpoint] = value
        self._stamps[endpoint] = round_index

    def endpoints(self):
        return list(self._values)


@dataclass
class Delivery:
    round_index: int
    direction: int
    delivered: dict


@dataclass
class NetworkLog:
    """Per-round drop records and totals for one run."""

    rounds: set = field(default_factory=set)
    deliveries: list = field(default_factory=list)
    per_round_delay_ms: float = 200.0

    @property
    def simulated_delay_ms(self) -> float:
        return len(self.rounds) * self.per_round_delay_ms

    @property
    def endpoint_rounds(self) -> int:
        return sum(len(d.delivered) for d in self.deliveries)

    @property
    def stale_count(self) -> int:
        return sum(sum(1 for ok in d.delivered.values() if not ok) for d in self.deliveries)

    def drop_bitmap(self) -> str:
        """One line per (round, direction): ``round dir bits`` with 1 = dropped."""
        lines = []
        for d in self.deliveries:
            bits = "".join("0" if d.delivered[e] else "1" for e in sorted(d.delivered))
            lines.append(f"{d.round_index} {_DIRECTION_NAMES[d.direction]} {bits}")
        return "\n".join(lines) + ("\n" if lines else "")


def deliver_round(payloads: dict, mailbox: Mailbox, channel: ChannelModel, round_index: int,
                  direction: int, log: NetworkLog | None = None) -> Delivery:
    """Push one packet per endpoint through the channel into ``mailbox``.

    Dropped packets leave the receiver's previous value (and stamp) in place.
    """
    delivered = {}
    for endpoint in sorted(payloads):
        ok = not is_dropped(channel, round_index, direction, endpoint)
        if ok:
            mailbox.put(endpoint, payloads[endpoint], round_index)
        delivered[endpoint] = ok
    record = Delivery(round_index, direction, delivered)
    if log is not None:
        log.rounds.add(round_index)
        log.deliveries.append(record)
    return record


def stale_fraction(report) -> float:
    """Share of endpoint-rounds that were served a stale value.

    Accepts a :class:`NetworkLog` or anything with a ``network`` attribute
    holding one (such as a run report).
    """
    log = getattr(report, "network", report)
    if log is None or log.endpoint_rounds == 0:
        return 0.0
    return log.stale_count / log.endpoint_rounds
