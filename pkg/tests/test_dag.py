"""Dependency graph: closest-writer edges, pins, labels, persistence."""

import random

import pytest
from hypothesis import given, settings, strategies as st

from snakesmith.nb.dag import (
    CellNode,
    Dag,
    DagEdge,
    DagError,
    build_dag,
    check_label_constraints,
)


def node(reads=(), writes=(), source="pass", **kw) -> CellNode:
    return CellNode(source=source, reads=set(reads), writes=set(writes), **kw)


def brute_force_edges(nodes, pins=None):
    """Oracle: scan the whole prefix for the latest writer of each read."""
    pins = pins or {}
    expected = set()
    for i, n in enumerate(nodes):
        for name in n.reads:
            if (i, name) in pins:
                expected.add((pins[(i, name)], i, name))
                continue
            writers = [j for j in range(i) if name in nodes[j].writes]
            if writers:
                expected.add((max(writers), i, name))
    return expected


# ---------------------------------------------------------------------------
# closest-writer construction


def test_reader_connects_to_latest_writer():
    nodes = [node(writes={"x"}), node(writes={"x"}), node(reads={"x"})]
    dag = build_dag(nodes)
    assert [(e.src, e.dst, e.name) for e in dag.edges] == [(1, 2, "x")]


def test_unwritten_reads_become_external():
    nodes = [node(reads={"data", "x"}, writes={"y"}), node(reads={"y", "cfg"})]
    dag = build_dag(nodes)
    assert dag.external == {0: {"data", "x"}, 1: {"cfg"}}
    assert [(e.src, e.dst, e.name) for e in dag.edges] == [(0, 1, "y")]


def test_one_edge_per_reader_name_pair():
    nodes = [node(writes={"x", "y"}), node(reads={"x", "y"}), node(reads={"x"})]
    dag = build_dag(nodes)
    assert len(dag.edges) == 3
    assert dag.edge(1, "x") is not None
    assert dag.edge(2, "y") is None


_NAMES = ["a", "b", "c", "d", "e"]


def _random_nodes(rng: random.Random) -> list[CellNode]:
    out = []
    for _ in range(rng.randint(1, 8)):
        reads = {n for n in _NAMES if rng.random() < 0.3}
        writes = {n for n in _NAMES if rng.random() < 0.3}
        out.append(node(reads=reads, writes=writes))
    return out


def test_randomized_edges_match_brute_force():
    rng = random.Random(99)
    for _ in range(300):
        nodes = _random_nodes(rng)
        pins = {}
        # pin some (reader, name) pairs to a valid non-closest writer
        for i, n in enumerate(nodes):
            for name in n.reads:
                writers = [j for j in range(i) if name in nodes[j].writes]
                if len(writers) > 1 and rng.random() < 0.5:
                    pins[(i, name)] = writers[0]
        dag = build_dag(nodes, pins=pins)
        got = {(e.src, e.dst, e.name) for e in dag.edges}
        assert got == brute_force_edges(nodes, pins)
        dag.assert_acyclic()
        for i, n in enumerate(nodes):
            resolved = {e.name for e in dag.in_edges(i)}
            assert dag.external.get(i, set()) == n.reads - resolved


@given(st.integers(0, 10**9))
@settings(max_examples=150, deadline=None)
def test_edges_always_point_forward(seed):
    nodes = _random_nodes(random.Random(seed))
    dag = build_dag(nodes)
    assert all(e.src < e.dst for e in dag.edges)


# ---------------------------------------------------------------------------
# pins


def test_pin_overrides_closest_writer():
    nodes = [node(writes={"x"}), node(writes={"x"}), node(reads={"x"})]
    dag = build_dag(nodes, pins={(2, "x"): 0})
    assert [(e.src, e.dst) for e in dag.edges] == [(0, 2)]


def test_build_rejects_invalid_pins():
    nodes = [node(writes={"x"}), node(reads={"x"})]
    with pytest.raises(DagError, match="does not write"):
        build_dag(nodes, pins={(1, "y"): 0})
    with pytest.raises(DagError, match="earlier cell"):
        build_dag(nodes, pins={(0, "x"): 1})
    with pytest.raises(DagError, match="out of range"):
        build_dag(nodes, pins={(5, "x"): 0})


def test_pin_writer_validates_then_applies():
    nodes = [node(writes={"x"}), node(writes={"x"}), node(reads={"x"})]
    dag = build_dag(nodes)
    with pytest.raises(DagError, match="does not write"):
        dag.pin_writer(2, "q", 0)
    with pytest.raises(DagError, match="does not read"):
        dag.pin_writer(1, "x", 0)
    with pytest.raises(DagError, match="earlier"):
        dag.pin_writer(1, "x", 1)
    dag.pin_writer(2, "x", 0)
    assert dag.pins == {(2, "x"): 0}
    dag.unpin(2, "x")
    dag.unpin(2, "x")  # idempotent
    assert dag.pins == {}


# ---------------------------------------------------------------------------
# labels and resolutions


def test_label_constraint_rule_feeding_script():
    nodes = [node(writes={"x"}, label="rule"), node(reads={"x"}, label="script")]
    violations = check_label_constraints(build_dag(nodes))
    assert [v.kind for v in violations] == ["rule_to_script"]
    assert violations[0].cells == [0, 1]


def test_label_constraint_script_feeding_rule_is_fine():
    nodes = [node(writes={"f"}, label="script"), node(reads={"f"}, label="rule")]
    assert check_label_constraints(build_dag(nodes)) == []


def test_undecided_cells_block_export():
    nodes = [node(writes={"x"}, label="undecided")]
    violations = check_label_constraints(build_dag(nodes))
    assert [v.kind for v in violations] == ["undecided_cell"]


def test_set_label_guards():
    dag = build_dag([node(writes={"f"}, is_function=True), node()])
    with pytest.raises(DagError, match="stay scripts"):
        dag.set_label(0, "rule")
    with pytest.raises(DagError, match="unknown label"):
        dag.set_label(1, "step")
    with pytest.raises(DagError, match="out of range"):
        dag.set_label(9, "rule")
    dag.set_label(1, "script")
    assert dag.nodes[1].label == "script"


def test_set_resolution_wildcard_roundtrip():
    dag = build_dag([node(writes={"x"}), node(reads={"x"})])
    dag.set_resolution(1, "x", "wildcard")
    assert dag.edge(1, "x").wildcard == "x"
    dag.set_resolution(1, "x", "wildcard", wildcard="sample")
    assert dag.edge(1, "x").wildcard == "sample"
    dag.set_resolution(1, "x", "data_file")
    assert dag.edge(1, "x").wildcard is None
    with pytest.raises(DagError, match="no edge"):
        dag.set_resolution(1, "missing", "wildcard")
    with pytest.raises(DagError, match="unknown resolution"):
        dag.set_resolution(1, "x", "inline")


# ---------------------------------------------------------------------------
# queries and persistence


def test_navigation_helpers():
    nodes = [node(writes={"x", "y"}), node(reads={"x"}, writes={"z"}), node(reads={"y", "z"})]
    dag = build_dag(nodes)
    assert dag.predecessors(2) == [0, 1]
    assert dag.successors(0) == [1, 2]
    assert dag.topo_order() == [0, 1, 2]
    with pytest.raises(DagError, match="backward"):
        Dag(nodes=nodes, edges=[DagEdge(2, 1, "z")]).assert_acyclic()


def test_to_dict_shape_and_content_ids():
    nodes = [node(writes={"x"}, source="x = 1"), node(reads={"x"}, source="y = x")]
    dag = build_dag(nodes)
    dag.pin_writer(1, "x", 0)
    data = dag.to_dict()
    assert set(data) == {"cells", "edges", "pins", "labels"}
    assert data["cells"][0]["id"].startswith("c0-")
    assert len(data["cells"][0]["id"]) == len("c0-") + 8
    assert data["edges"] == [
        {"src": 0, "dst": 1, "name": "x", "resolution": "data_file", "wildcard": None}
    ]
    assert data["pins"] == [{"dst": 1, "name": "x", "src": 0}]
    assert data["labels"] == ["rule", "rule"]
    # same source at a different position gets a different id
    assert nodes[0].content_id(0) != nodes[0].content_id(3)
