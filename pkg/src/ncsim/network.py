"""Population and topology construction.

A network is a list of named neuron populations, each carrying a bank of
named synapse slots, plus an explicit edge list. Every edge targets one
slot of one destination neuron and owns a per-edge synapse instance at
runtime. For the event fabric, populations map to chips (chip id =
population index) and each edge is assigned a chip-local synapse address
in creation order, so identical specs always serialize to identical
routing tables.

Presets:
  build_swta  - line of excitatory neurons exciting first and second
                neighbors plus a small global inhibitory pool
  build_fsm   - several self-exciting populations sharing one inhibitory
                pool, so a single population can hold persistent activity
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .aer import RoutingTable
from .neuron import NeuronParams
from .plasticity import PlasticityParams
from .synapse import SynapseParams

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class SlotSpec:
    """One named synapse bank: carrier synapse plus optional plasticity."""

    synapse: SynapseParams
    plasticity: Optional[PlasticityParams] = None


@dataclass(frozen=True)
class PopulationSpec:
    name: str
    size: int
    neuron: NeuronParams
    slots: Dict[str, SlotSpec] = field(default_factory=dict)

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("population size must be >= 1")


@dataclass(frozen=True)
class ConnectionSpec:
    """Pattern-based connection request between two populations.

    pattern: "all_to_all" | "one_to_one" | ("nearest_neighbors", k) |
             explicit [(src_idx, dst_idx), ...]
    weight:  weight voltage applied to every materialized edge (falls back
             to the slot's resting weight when None)
    """

    src: str
    dst: str
    pattern: Union[str, Tuple[str, int], Sequence[Tuple[int, int]]]
    slot: str
    weight: Optional[float] = None
    allow_self: bool = False


@dataclass(frozen=True)
class Edge:
    src_pop: str
    src_idx: int
    dst_pop: str
    dst_idx: int
    slot: str
    weight: Optional[float] = None


@dataclass
class NetworkSpec:
    populations: List[PopulationSpec] = field(default_factory=list)
    edges: List[Edge] = field(default_factory=list)

    def population(self, name: str) -> PopulationSpec:
        for p in self.populations:
            if p.name == name:
                return p
        raise KeyError(f"unknown population {name!r}")

    def pop_index(self, name: str) -> int:
        for i, p in enumerate(self.populations):
            if p.name == name:
                return i
        raise KeyError(f"unknown population {name!r}")

    def add_population(self, pop: PopulationSpec) -> None:
        if any(p.name == pop.name for p in self.populations):
            raise ValueError(f"duplicate population name {pop.name!r}")
        self.populations.append(pop)

    # -------------------------------------------------------------- routing
    def to_routing_table(self) -> RoutingTable:
        """Materialize edges into source -> destination-synapse entries.

        Chip id is the population index; synapse addresses are assigned
        per destination chip in edge order.
        """
        table = RoutingTable()
        for _, src_addr, dst_addr in self.addressed_edges():
            table.add(src_addr, dst_addr)
        return table

    def addressed_edges(self):
        """Yield (edge, (src_chip, src_neuron), (dst_chip, dst_synapse))."""
        counters = [0] * len(self.populations)
        out = []
        for e in self.edges:
            src_chip = self.pop_index(e.src_pop)
            dst_chip = self.pop_index(e.dst_pop)
            out.append((e, (src_chip, e.src_idx), (dst_chip, counters[dst_chip])))
            counters[dst_chip] += 1
        return out

    # -------------------------------------------------------- serialization
    def to_dict(self) -> dict:
        def slot_dict(s: SlotSpec):
            d = {"synapse": asdict(s.synapse)}
            if s.plasticity is not None:
                d["plasticity"] = asdict(s.plasticity)
            return d

        return {
            "schema_version": SCHEMA_VERSION,
            "populations": [
                {
                    "name": p.name,
                    "size": p.size,
                    "neuron": asdict(p.neuron),
                    "slots": {n: slot_dict(s) for n, s in p.slots.items()},
                }
                for p in self.populations
            ],
            "edges": [
                [e.src_pop, e.src_idx, e.dst_pop, e.dst_idx, e.slot, e.weight]
                for e in self.edges
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkSpec":
        if data.get("schema_version") != SCHEMA_VERSION:
            raise ValueError("unsupported network schema version")
        net = cls()
        for p in data["populations"]:
            slots = {}
            for name, s in p["slots"].items():
                plast = s.get("plasticity")
                slots[name] = SlotSpec(
                    synapse=SynapseParams(**s["synapse"]),
                    plasticity=PlasticityParams(**plast) if plast else None,
                )
            net.add_population(
                PopulationSpec(
                    name=p["name"],
                    size=p["size"],
                    neuron=NeuronParams(**p["neuron"]),
                    slots=slots,
                )
            )
        for row in data["edges"]:
            net.edges.append(Edge(*row))
        _validate_edges(net)
        return net

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "NetworkSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _validate_edges(net: NetworkSpec) -> None:
    for e in net.edges:
        src = net.population(e.src_pop)
        dst = net.population(e.dst_pop)
        if not (0 <= e.src_idx < src.size and 0 <= e.dst_idx < dst.size):
            raise ValueError(f"edge index out of bounds: {e}")
        if e.slot not in dst.slots:
            raise ValueError(f"edge targets unknown slot {e.slot!r} of {e.dst_pop!r}")


def _expand_pattern(conn: ConnectionSpec, n_src: int, n_dst: int):
    p = conn.pattern
    if p == "all_to_all":
        pairs = [
            (i, j)
            for i in range(n_src)
            for j in range(n_dst)
            if conn.allow_self or conn.src != conn.dst or i != j
        ]
    elif p == "one_to_one":
        if n_src != n_dst:
            raise ValueError("one_to_one requires equal population sizes")
        pairs = [(i, i) for i in range(n_src)]
    elif isinstance(p, tuple) and len(p) == 2 and p[0] == "nearest_neighbors":
        k = int(p[1])
        if conn.src != conn.dst:
            raise ValueError("nearest_neighbors requires src == dst")
        pairs = [
            (i, i + d)
            for i in range(n_src)
            for d in range(-k, k + 1)
            if d != 0 and 0 <= i + d < n_src
        ]
    else:
        pairs = [(int(i), int(j)) for i, j in p]
    return pairs


def connect(net: NetworkSpec, conn: ConnectionSpec) -> NetworkSpec:
    """Materialize a connection pattern into explicit edges.

    Returns the same NetworkSpec with edges appended (construction is
    single-threaded; specs are treated as immutable once built).
    """
    src = net.population(conn.src)
    dst = net.population(conn.dst)
    if conn.slot not in dst.slots:
        raise ValueError(f"population {conn.dst!r} has no slot {conn.slot!r}")
    for i, j in _expand_pattern(conn, src.size, dst.size):
        if not (0 <= i < src.size and 0 <= j < dst.size):
            raise ValueError(f"pattern index ({i}, {j}) out of bounds")
        net.edges.append(
            Edge(conn.src, i, conn.dst, j, conn.slot, conn.weight)
        )
    return net


def build_swta(
    n_exc: int,
    n_inh: int,
    w1: float,
    w2: float,
    w_ei: float,
    w_ie: float,
    w_ii: float,
    neuron_exc: Optional[NeuronParams] = None,
    neuron_inh: Optional[NeuronParams] = None,
    slot_exc: Optional[SynapseParams] = None,
    slot_inh: Optional[SynapseParams] = None,
    slot_input: Optional[SynapseParams] = None,
    ring: bool = False,
) -> NetworkSpec:
    """Soft winner-take-all: local excitation plus global inhibition.

    Each excitatory neuron excites its first neighbors (weight w1) and
    second neighbors (w2) along a non-wrapping line (set ring=True for a
    closed ring), drives the whole inhibitory pool (w_ei), and receives
    global inhibition (w_ie); the pool also inhibits itself (w_ii). An
    'input' slot on both populations accepts external stimuli.
    """
    if n_exc < 5:
        raise ValueError("n_exc must be >= 5")
    if n_inh < 1:
        raise ValueError("n_inh must be >= 1")
    neuron_exc = neuron_exc or NeuronParams()
    neuron_inh = neuron_inh or neuron_exc
    slot_exc = slot_exc or SynapseParams()
    slot_inh = slot_inh or replace(slot_exc, inhibitory=True)
    if not slot_inh.inhibitory:
        raise ValueError("slot_inh must be inhibitory")
    slot_input = slot_input or slot_exc

    exc_slots = {"exc": SlotSpec(slot_exc), "inh": SlotSpec(slot_inh),
                 "input": SlotSpec(slot_input)}
    inh_slots = {"exc": SlotSpec(slot_exc), "inh": SlotSpec(slot_inh),
                 "input": SlotSpec(slot_input)}

    net = NetworkSpec()
    net.add_population(PopulationSpec("exc", n_exc, neuron_exc, exc_slots))
    net.add_population(PopulationSpec("inh", n_inh, neuron_inh, inh_slots))

    local = []
    for i in range(n_exc):
        for d, w in ((1, w1), (-1, w1), (2, w2), (-2, w2)):
            j = i + d
            if ring:
                local.append((i, j % n_exc, w))
            elif 0 <= j < n_exc:
                local.append((i, j, w))
    for i, j, w in local:
        net.edges.append(Edge("exc", i, "exc", j, "exc", w))
    connect(net, ConnectionSpec("exc", "inh", "all_to_all", "exc", w_ei))
    connect(net, ConnectionSpec("inh", "exc", "all_to_all", "inh", w_ie))
    if n_inh > 1:
        connect(net, ConnectionSpec("inh", "inh", "all_to_all", "inh", w_ii))
    return net


def build_fsm(
    n_per_state: int,
    n_states: int,
    w_self: float,
    w_ie: float,
    w_ei: float,
    n_inh: int = 4,
    w_ii: Optional[float] = None,
    neuron_exc: Optional[NeuronParams] = None,
    neuron_inh: Optional[NeuronParams] = None,
    slot_exc: Optional[SynapseParams] = None,
    slot_inh: Optional[SynapseParams] = None,
    slot_input: Optional[SynapseParams] = None,
) -> NetworkSpec:
    """State-holding network: n_states recurrent populations, one inhibitory pool.

    Recurrent self-excitation (w_self, all-to-all within each state
    population, no self-loops) lets a stimulated population sustain its
    activity; shared inhibition makes the active state exclusive.
    """
    if n_states < 2:
        raise ValueError("n_states must be >= 2")
    if n_per_state < 1 or n_inh < 1:
        raise ValueError("population sizes must be positive")
    neuron_exc = neuron_exc or NeuronParams()
    neuron_inh = neuron_inh or neuron_exc
    slot_exc = slot_exc or SynapseParams()
    slot_inh = slot_inh or replace(slot_exc, inhibitory=True)
    if not slot_inh.inhibitory:
        raise ValueError("slot_inh must be inhibitory")
    slot_input = slot_input or slot_exc
    w_ii = w_ie if w_ii is None else w_ii

    slots = {"exc": SlotSpec(slot_exc), "inh": SlotSpec(slot_inh),
             "input": SlotSpec(slot_input)}
    net = NetworkSpec()
    names = [f"state{i + 1}" for i in range(n_states)]
    for name in names:
        net.add_population(PopulationSpec(name, n_per_state, neuron_exc, dict(slots)))
    net.add_population(PopulationSpec("inh", n_inh, neuron_inh, dict(slots)))

    for name in names:
        if w_self != 0.0:
            connect(net, ConnectionSpec(name, name, "all_to_all", "exc", w_self))
        connect(net, ConnectionSpec(name, "inh", "all_to_all", "exc", w_ei))
        connect(net, ConnectionSpec("inh", name, "all_to_all", "inh", w_ie))
    if n_inh > 1:
        connect(net, ConnectionSpec("inh", "inh", "all_to_all", "inh", w_ii))
    return net
