"""Topology construction tests: edge-count formulas, sign correctness,
serialization round-trips, and construction purity."""

import pytest

from ncsim.network import (
    ConnectionSpec,
    Edge,
    NetworkSpec,
    PopulationSpec,
    SlotSpec,
    build_fsm,
    build_swta,
    connect,
)
from ncsim.neuron import NeuronParams
from ncsim.plasticity import PlasticityParams
from ncsim.synapse import SynapseParams


def small_net(n_a=4, n_b=3):
    net = NetworkSpec()
    slots = {"exc": SlotSpec(SynapseParams()),
             "plastic": SlotSpec(SynapseParams(), PlasticityParams())}
    net.add_population(PopulationSpec("a", n_a, NeuronParams(), dict(slots)))
    net.add_population(PopulationSpec("b", n_b, NeuronParams(), dict(slots)))
    return net


# ----------------------------------------------------------------- connect
def test_one_to_one_edge_count():
    net = small_net(4, 4)
    connect(net, ConnectionSpec("a", "b", "one_to_one", "exc"))
    assert len(net.edges) == 4


def test_all_to_all_edge_count():
    net = small_net(4, 3)
    connect(net, ConnectionSpec("a", "b", "all_to_all", "exc"))
    assert len(net.edges) == 12


def test_all_to_all_self_excludes_loops():
    net = small_net(4, 3)
    connect(net, ConnectionSpec("a", "a", "all_to_all", "exc"))
    assert len(net.edges) == 12  # 4*4 minus 4 self loops
    assert all(not (e.src_idx == e.dst_idx) for e in net.edges)


def test_nearest_neighbors_boundary_truncation():
    net = small_net(6, 3)
    connect(net, ConnectionSpec("a", "a", ("nearest_neighbors", 2), "exc"))
    out_degree = {}
    for e in net.edges:
        out_degree[e.src_idx] = out_degree.get(e.src_idx, 0) + 1
    assert out_degree[0] == 2   # neighbors 1, 2
    assert out_degree[1] == 3   # neighbors 0, 2, 3
    assert out_degree[2] == 4
    assert out_degree[3] == 4


def test_explicit_pairs_and_bounds():
    net = small_net(4, 3)
    connect(net, ConnectionSpec("a", "b", [(0, 1), (3, 2)], "exc"))
    assert [(e.src_idx, e.dst_idx) for e in net.edges] == [(0, 1), (3, 2)]
    with pytest.raises(ValueError):
        connect(net, ConnectionSpec("a", "b", [(0, 99)], "exc"))


def test_bad_slot_rejected():
    net = small_net()
    with pytest.raises(ValueError):
        connect(net, ConnectionSpec("a", "b", "one_to_one", "nope"))


def test_one_to_one_size_mismatch():
    net = small_net(4, 3)
    with pytest.raises(ValueError):
        connect(net, ConnectionSpec("a", "b", "one_to_one", "exc"))


# --------------------------------------------------------------- build_swta
def test_swta_full_scale_counts():
    net = build_swta(124, 4, w1=0.5, w2=0.4, w_ei=0.5, w_ie=0.5, w_ii=0.4)
    assert sum(p.size for p in net.populations) == 128
    exc = net.population("exc")
    inh = net.population("inh")
    assert exc.size == 124 and inh.size == 4


def test_swta_local_degree():
    net = build_swta(10, 2, w1=0.5, w2=0.4, w_ei=0.5, w_ie=0.5, w_ii=0.4)
    local = [e for e in net.edges if e.src_pop == "exc" and e.dst_pop == "exc"]
    deg = {}
    for e in local:
        deg[e.src_idx] = deg.get(e.src_idx, 0) + 1
    # interior neuron: 4 local targets (i+-1, i+-2); edges truncate
    assert deg[5] == 4
    assert deg[0] == 2
    assert deg[1] == 3
    to_inh = [e for e in net.edges if e.src_pop == "exc" and e.dst_pop == "inh"
              and e.src_idx == 5]
    assert len(to_inh) == 2


def test_swta_ring_option():
    net = build_swta(10, 1, w1=0.5, w2=0.4, w_ei=0.5, w_ie=0.5, w_ii=0.4, ring=True)
    local = [e for e in net.edges if e.src_pop == "exc" and e.dst_pop == "exc"]
    deg = {}
    for e in local:
        deg[e.src_idx] = deg.get(e.src_idx, 0) + 1
    assert all(d == 4 for d in deg.values())


def test_swta_sign_correctness():
    net = build_swta(8, 2, w1=0.5, w2=0.4, w_ei=0.5, w_ie=0.5, w_ii=0.4)
    for e in net.edges:
        dst_pop = net.population(e.dst_pop)
        inhibitory = dst_pop.slots[e.slot].synapse.inhibitory
        if e.src_pop == "inh":
            assert inhibitory, f"inh edge {e} routed to non-inhibitory slot"
        else:
            assert not inhibitory, f"exc edge {e} routed to inhibitory slot"


def test_swta_size_validation():
    with pytest.raises(ValueError):
        build_swta(3, 1, 0.5, 0.4, 0.5, 0.5, 0.4)
    with pytest.raises(ValueError):
        build_swta(8, 0, 0.5, 0.4, 0.5, 0.5, 0.4)


# ---------------------------------------------------------------- build_fsm
def test_fsm_two_state_topology():
    net = build_fsm(8, 2, w_self=0.5, w_ie=0.5, w_ei=0.5)
    names = [p.name for p in net.populations]
    assert names == ["state1", "state2", "inh"]
    self1 = [e for e in net.edges if e.src_pop == "state1" and e.dst_pop == "state1"]
    assert len(self1) == 8 * 7  # all-to-all without self loops
    cross = [e for e in net.edges if e.src_pop == "state1" and e.dst_pop == "state2"]
    assert cross == []


def test_fsm_no_self_weight_no_recurrence():
    net = build_fsm(8, 2, w_self=0.0, w_ie=0.5, w_ei=0.5)
    self1 = [e for e in net.edges if e.src_pop == "state1" and e.dst_pop == "state1"]
    assert self1 == []


def test_fsm_symmetric_populations():
    net = build_fsm(6, 3, w_self=0.5, w_ie=0.5, w_ei=0.5)
    per_state = {}
    for e in net.edges:
        if e.src_pop.startswith("state") and e.dst_pop == e.src_pop:
            per_state[e.src_pop] = per_state.get(e.src_pop, 0) + 1
    assert len(set(per_state.values())) == 1


def test_fsm_size_validation():
    with pytest.raises(ValueError):
        build_fsm(8, 1, 0.5, 0.5, 0.5)


# ------------------------------------------------------------ serialization
def test_round_trip_json(tmp_path):
    net = build_swta(8, 2, w1=0.51, w2=0.42, w_ei=0.53, w_ie=0.54, w_ii=0.45)
    path = tmp_path / "net.json"
    net.save(path)
    loaded = NetworkSpec.load(path)
    assert loaded.to_dict() == net.to_dict()
    assert [e for e in loaded.edges] == [e for e in net.edges]


def test_round_trip_with_plasticity(tmp_path):
    net = small_net()
    connect(net, ConnectionSpec("a", "b", "all_to_all", "plastic", weight=0.2))
    path = tmp_path / "net.json"
    net.save(path)
    loaded = NetworkSpec.load(path)
    slot = loaded.population("b").slots["plastic"]
    assert slot.plasticity is not None
    assert loaded.to_dict() == net.to_dict()


def test_construction_pure_identical_tables(tmp_path):
    a = build_swta(16, 2, 0.5, 0.4, 0.5, 0.5, 0.4)
    b = build_swta(16, 2, 0.5, 0.4, 0.5, 0.5, 0.4)
    pa, pb = tmp_path / "a.txt", tmp_path / "b.txt"
    a.to_routing_table().save(pa)
    b.to_routing_table().save(pb)
    assert pa.read_bytes() == pb.read_bytes()


def test_routing_table_addressing():
    net = small_net(2, 2)
    connect(net, ConnectionSpec("a", "b", "all_to_all", "exc"))
    table = net.to_routing_table()
    # chip 1 synapse addresses assigned in edge order
    assert table.targets((0, 0)) == [(1, 0), (1, 1)]
    assert table.targets((0, 1)) == [(1, 2), (1, 3)]


def test_edge_validation_on_load(tmp_path):
    net = small_net()
    net.edges.append(Edge("a", 0, "b", 99, "exc", None))
    path = tmp_path / "net.json"
    net.save(path)
    with pytest.raises(ValueError):
        NetworkSpec.load(path)


def test_duplicate_population_rejected():
    net = small_net()
    with pytest.raises(ValueError):
        net.add_population(PopulationSpec("a", 3, NeuronParams(), {}))
