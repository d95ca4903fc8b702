import json
import random

import pytest

from cadgraph.clustering import Clustering
from cadgraph.errors import SchemaVersionMismatch, UnknownGroupInAdjacency, UnknownSelector
from cadgraph.geometry import Box3
from cadgraph.scene_graph import (
    ADJACENT,
    CLUSTER,
    MEMBER_OF,
    Edge,
    build_scene_graph,
    deserialize,
    export_dot,
    from_dict,
    query,
    serialize,
    to_dict,
)

from graphs import FakeGroup, random_scene_graph


def fake(i, path, lo=(0, 0, 0)):
    hi = tuple(a + 1 for a in lo)
    return FakeGroup(i, path, (path,), Box3(lo, hi), tuple(a + 0.5 for a in lo))


@pytest.fixture
def small_graph():
    groups = [fake(0, "/a"), fake(1, "/b", (1, 0, 0)), fake(2, "/c", (5, 0, 0))]
    clustering = Clustering({0: 0, 1: 0, 2: 1})
    labels = {"/a": {"group": "Valve assembly", "name": "Gate valve"}}
    return build_scene_graph(groups, clustering, [(0, 1), (1, 2)], labels)


def test_structure(small_graph):
    g = small_graph
    assert [n.path for n in g.mesh_nodes()] == ["/a", "/b", "/c"]
    assert [n.path for n in g.cluster_nodes()] == ["cluster/0", "cluster/1"]
    # the pair spanning two clusters is dropped
    assert {e for e in g.edges if e.kind == ADJACENT} == {Edge(0, 1, ADJACENT)}
    assert Edge(2, 4, MEMBER_OF) in g.edges
    cluster0 = g.nodes[3]
    assert cluster0.kind == CLUSTER and cluster0.aabb == Box3((0, 0, 0), (2, 1, 1))
    assert g.nodes[0].group_label == "Valve assembly"


def test_noise_and_unknown_groups_rejected():
    groups = [fake(0, "/a"), fake(1, "/b")]
    with pytest.raises(ValueError):
        build_scene_graph(groups, Clustering({0: 0, 1: -1}), [])
    with pytest.raises(UnknownGroupInAdjacency):
        build_scene_graph(groups, Clustering({0: 0, 1: 0}), [(0, 7)])


def test_queries(small_graph):
    assert [n.path for n in query(small_graph, "group_label", "Valve assembly")] == ["/a"]
    assert [n.path for n in query(small_graph, "cluster", 0)] == ["/a", "/b"]
    assert [n.path for n in query(small_graph, "neighbors", 0)] == ["/b"]
    assert [n.path for n in query(small_graph, "path", "/[bc]")] == ["/b", "/c"]
    with pytest.raises(UnknownSelector):
        query(small_graph, "colour", "red")


def test_round_trip_random_graphs():
    rng = random.Random(42)
    for _ in range(20):
        g = random_scene_graph(rng)
        assert deserialize(serialize(g)) == g
        assert serialize(deserialize(serialize(g))) == serialize(g)


def test_unknown_fields_survive(small_graph):
    doc = to_dict(small_graph)
    doc["producer"] = "other-tool"
    doc["nodes"][0]["colour"] = "red"
    again = to_dict(from_dict(json.loads(json.dumps(doc))))
    assert again["producer"] == "other-tool"
    assert again["nodes"][0]["colour"] == "red"


def test_schema_version_checked(small_graph):
    doc = to_dict(small_graph)
    doc["schema"] = "cadgraph/99"
    with pytest.raises(SchemaVersionMismatch):
        from_dict(doc)


def test_dot_is_deterministic(small_graph):
    text = export_dot(small_graph)
    assert text == export_dot(deserialize(serialize(small_graph)))
    assert 'n0 [label="Gate valve"' in text
    assert "cluster" not in export_dot(small_graph, include_clusters=False)


def test_translation_moves_geometry_only(small_graph):
    moved = small_graph.translated((1.0, 2.0, 3.0))
    assert moved.edges == small_graph.edges
    assert moved.nodes[0].centroid == (1.5, 2.5, 3.5)
