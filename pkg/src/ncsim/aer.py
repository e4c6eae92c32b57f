"""Address-event representation fabric.

Spikes leave the neuron arrays as address events: (timestamp, source
address) tuples on a shared digital bus. Colliding events are serialized
by an arbiter that services one event per delta seconds and queues the
rest, so n coincident events suffer at most (n-1)*delta extra delay.
Departed events are fanned out through a look-up-table of source ->
destination-synapse pairs.

Routing table file format, one entry per line, '#' starts a comment:

    src_chip src_neuron dst_chip dst_synapse

Event log export columns:

    t,src_chip,src_neuron,dst_chip,dst_synapse,depart_t
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

SourceAddress = Tuple[int, int]       # (chip, neuron)
Destination = Tuple[int, int]         # (chip, synapse)


@dataclass(frozen=True, order=True)
class AddressEvent:
    """One spike on the bus; (t, seq) totally orders events."""

    t: float
    seq: int
    src: SourceAddress = field(compare=False)

    def __post_init__(self):
        if self.t < 0:
            raise ValueError("event timestamp must be non-negative")


@dataclass(frozen=True)
class ArbiterConfig:
    """service_time: seconds per event; queue_capacity: max backlog."""

    service_time: float = 1.0 / 60e6
    queue_capacity: int = 8192

    def __post_init__(self):
        if self.service_time <= 0:
            raise ValueError("service_time must be positive")
        if self.queue_capacity <= 0:
            raise ValueError("queue_capacity must be positive")


@dataclass
class ArbitrationResult:
    departures: List[Tuple[AddressEvent, float]]
    dropped: List[AddressEvent]

    @property
    def n_dropped(self) -> int:
        return len(self.dropped)


def arbitrate(events: Sequence[AddressEvent], cfg: ArbiterConfig) -> ArbitrationResult:
    """Serialize events through a one-at-a-time server.

    Events must arrive sorted by (t, seq). Each departs at the earliest
    time consistent with the service rate; an arrival that would push the
    backlog beyond queue_capacity is dropped (saturated bus), not
    back-pressured.
    """
    delta = cfg.service_time
    busy_until = -math.inf
    departures: List[Tuple[AddressEvent, float]] = []
    dropped: List[AddressEvent] = []
    last_key = None
    for ev in events:
        key = (ev.t, ev.seq)
        if last_key is not None and key < last_key:
            raise ValueError("events must be sorted by (t, seq)")
        last_key = key
        backlog = max(0.0, busy_until - ev.t) / delta
        if backlog > cfg.queue_capacity - 1 + 1e-9:
            dropped.append(ev)
            continue
        depart = max(ev.t, busy_until)
        departures.append((ev, depart))
        busy_until = depart + delta
    return ArbitrationResult(departures=departures, dropped=dropped)


class RoutingTable:
    """Look-up table mapping source addresses to destination fan-out lists."""

    def __init__(self):
        self._entries: Dict[SourceAddress, List[Destination]] = {}

    def add(self, src: SourceAddress, dst: Destination) -> None:
        targets = self._entries.setdefault(tuple(src), [])
        if tuple(dst) in targets:
            raise ValueError(f"duplicate routing entry {src} -> {dst}")
        targets.append(tuple(dst))

    def targets(self, src: SourceAddress) -> List[Destination]:
        return list(self._entries.get(tuple(src), []))

    def sources(self) -> List[SourceAddress]:
        return list(self._entries.keys())

    def n_entries(self) -> int:
        return sum(len(v) for v in self._entries.values())

    def __eq__(self, other):
        return isinstance(other, RoutingTable) and self._entries == other._entries

    def to_lines(self) -> List[str]:
        lines = []
        for src in sorted(self._entries):
            for dst in self._entries[src]:
                lines.append(f"{src[0]} {src[1]} {dst[0]} {dst[1]}")
        return lines

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("# src_chip src_neuron dst_chip dst_synapse\n")
            for line in self.to_lines():
                fh.write(line + "\n")

    @classmethod
    def load(
        cls,
        path,
        valid_dst: Optional[Callable[[Destination], bool]] = None,
    ) -> "RoutingTable":
        """Parse and validate a routing table file.

        valid_dst, when given, rejects dangling destinations at load time.
        """
        table = cls()
        with open(path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                parts = line.split()
                if len(parts) != 4:
                    raise ValueError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
                try:
                    sc, sn, dc, ds = (int(p) for p in parts)
                except ValueError as exc:
                    raise ValueError(f"{path}:{lineno}: non-integer field") from exc
                if min(sc, sn, dc, ds) < 0:
                    raise ValueError(f"{path}:{lineno}: negative address")
                if valid_dst is not None and not valid_dst((dc, ds)):
                    raise ValueError(f"{path}:{lineno}: dangling destination ({dc}, {ds})")
                table.add((sc, sn), (dc, ds))
        return table


def route(event: AddressEvent, table: RoutingTable) -> List[Destination]:
    """All destinations of an event's source, in table order."""
    return table.targets(event.src)


def export_event_log(
    log: Iterable[Tuple[AddressEvent, float, Destination]], path
) -> None:
    """Write delivered events as CSV rows (one row per fan-out delivery)."""
    with open(path, "w") as fh:
        fh.write("t,src_chip,src_neuron,dst_chip,dst_synapse,depart_t\n")
        for ev, depart, dst in log:
            fh.write(
                f"{ev.t!r},{ev.src[0]},{ev.src[1]},{dst[0]},{dst[1]},{depart!r}\n"
            )


def bandwidth_stats(
    event_log: Sequence[Tuple[AddressEvent, float]], window: float = 1e-3
) -> dict:
    """Throughput and arbitration-delay statistics of an arbitrated log.

    event_log holds (event, departure time) pairs sorted by arrival time.
    Peak rate counts arrivals in fixed windows; queue depth is the running
    arrivals-minus-departures occupancy.
    """
    if not event_log:
        return {
            "peak_rate": 0.0,
            "mean_rate": 0.0,
            "max_queue_depth": 0,
            "max_delay": 0.0,
        }
    arrivals = [ev.t for ev, _ in event_log]
    departures = [d for _, d in event_log]
    t0, t1 = arrivals[0], max(max(arrivals), max(departures))
    span = max(t1 - t0, window)
    counts: Dict[int, int] = {}
    for t in arrivals:
        counts[int((t - t0) / window)] = counts.get(int((t - t0) / window), 0) + 1
    max_delay = max(d - ev.t for ev, d in event_log)
    # occupancy sweep: +1 at arrival, -1 at departure (departure wins ties:
    # an event departing exactly when another arrives has left the queue)
    marks = [(t, 1, 1) for t in arrivals] + [(d, 0, -1) for d in departures]
    marks.sort()
    depth = max_depth = 0
    for _, _, delta in marks:
        depth += delta
        max_depth = max(max_depth, depth)
    return {
        "peak_rate": max(counts.values()) / window,
        "mean_rate": len(arrivals) / span,
        "max_queue_depth": max_depth,
        "max_delay": max_delay,
    }
