import random

import pytest

from cadgraph.clustering import connected_components
from cadgraph.errors import OverlappingUnits, SchemaVersionMismatch
from cadgraph.functional import (
    FunctionalGraph,
    FunctionalUnit,
    deserialize,
    export_dot,
    export_functional_graph,
    extract_functional_relations,
    identify_functional_units,
    serialize,
)
from cadgraph.geometry import Box3
from cadgraph.scene_graph import build_scene_graph

from graphs import FakeGroup, random_functional_graph

P, V, G, T = "Pipe assembly", "Valve assembly", "Gauge", "Tank"


def make_graph(kinds, pairs):
    """kinds: list of group labels (or None); node i gets path /n{i:02d}."""
    groups = [
        FakeGroup(i, f"/n{i:02d}", (f"/n{i:02d}",), Box3((i, 0, 0), (i + 1, 1, 1)), (i + 0.5, 0.5, 0.5))
        for i in range(len(kinds))
    ]
    labels = {f"/n{i:02d}": {"group": k, "name": k} for i, k in enumerate(kinds) if k}
    return build_scene_graph(groups, connected_components(pairs, len(kinds)), pairs, labels)


def chain(kinds):
    return make_graph(kinds, [(i, i + 1) for i in range(len(kinds) - 1)])


def test_linear_chain():
    fg = extract_functional_relations(chain([P, V, V, P, P, G, P]))
    assert [(u.unit_group, u.seed_paths) for u in fg.units] == [(V, ("/n01", "/n02")), (G, ("/n05",))]
    assert fg.edges == {(1, 2)}
    assert fg.units[0].member_paths == ("/n00", "/n01", "/n02", "/n03")


def test_contested_pipe_goes_to_the_lower_index():
    fg = extract_functional_relations(chain([V, P, P, P, V]))
    assert fg.edges == {(1, 2)}
    assert fg.units[0].member_paths == ("/n00", "/n01", "/n02")
    assert fg.units[1].member_paths == ("/n03", "/n04")


def test_units_touching_directly_are_related():
    fg = extract_functional_relations(chain([P, V, G, P]))
    assert fg.edges == {(1, 2)}


def test_non_pipe_nodes_block_expansion():
    fg = extract_functional_relations(chain([V, P, "Structural element", P, G]))
    assert fg.edges == frozenset()
    fg = extract_functional_relations(chain([V, P, None, P, G]))
    assert fg.edges == frozenset()


def test_tank_star():
    kinds = [T, P, V, P, V, P, V]
    fg = extract_functional_relations(make_graph(kinds, [(0, 1), (1, 2), (0, 3), (3, 4), (0, 5), (5, 6)]))
    assert fg.units[0].unit_group == T
    assert fg.edges == {(1, 2), (1, 3), (1, 4)}


def test_custom_groups():
    kinds = [V, "Connection assembly", G]
    assert extract_functional_relations(chain(kinds)).edges == frozenset()
    fg = extract_functional_relations(chain(kinds), pipe_groups=[P, "Connection assembly"])
    assert fg.edges == {(1, 2)}


def test_outer_iterations_bounded_by_node_count():
    rng = random.Random(7)
    for _ in range(30):
        n = rng.randint(2, 30)
        kinds = [rng.choice([P, P, P, V, G, None]) for _ in range(n)]
        pairs = [(a, b) for a in range(n) for b in range(a + 1, n) if rng.random() < 2.5 / n]
        fg = extract_functional_relations(make_graph(kinds, pairs))
        assert 1 <= fg.outer_iterations <= n


def test_overlapping_units_rejected():
    g = chain([V, P, G])
    units = [FunctionalUnit(1, V, frozenset({0, 1})), FunctionalUnit(2, G, frozenset({1, 2}))]
    with pytest.raises(OverlappingUnits):
        extract_functional_relations(g, units=units)


def test_unit_order_is_by_smallest_path():
    units = identify_functional_units(chain([G, P, V, V]))
    assert [(u.index, u.unit_group, sorted(u.member_nodes)) for u in units] == [(1, G, [0]), (2, V, [2, 3])]


def test_translation_invariance():
    g = chain([P, V, P, P, G, P, T])
    a = extract_functional_relations(g)
    b = extract_functional_relations(g.translated((17.3, -4.2, 9.9)))
    assert a.signature() == b.signature()


def test_round_trip_and_dot():
    rng = random.Random(1)
    for _ in range(20):
        fg = random_functional_graph(rng)
        again = deserialize(serialize(fg))
        assert again == fg and again.outer_iterations == fg.outer_iterations
        assert export_dot(again) == export_dot(fg)
    text, dot = export_functional_graph(fg)
    assert deserialize(text) == fg and dot.startswith("graph functional {")


def test_schema_checked():
    doc = FunctionalGraph().to_dict()
    doc["schema"] = "other/2"
    with pytest.raises(SchemaVersionMismatch):
        FunctionalGraph.from_dict(doc)
