"""Functional units of pipe systems and the relations between them.

Units are connected groups of equally labelled mesh nodes (a valve body and
its handwheel, a gauge and its stem). Each unit then grows through adjacent
connector nodes (pipes), one ring per pass, with a global marked set so that
no connector is claimed twice. Two units are related when a node of one is
adjacent to a node of the other after growth.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import OverlappingUnits
from .scene_graph import ADJACENT, SceneGraph

logger = logging.getLogger(__name__)

SCHEMA = "cadgraph-functional/1"
DEFAULT_PIPE_GROUPS = ("Pipe assembly",)
DEFAULT_FUNCTIONAL_GROUPS = ("Valve assembly", "Gauge", "Tank", "Pump Unit")


@dataclass(frozen=True)
class FunctionalUnit:
    index: int
    unit_group: str
    member_nodes: frozenset[int]
    seed_nodes: frozenset[int] = frozenset()

    def __post_init__(self):
        if not self.seed_nodes:
            object.__setattr__(self, "seed_nodes", frozenset(self.member_nodes))


@dataclass(frozen=True)
class UnitNode:
    """A node of the functional graph, as exported."""

    index: int
    unit_group: str
    seed_paths: tuple[str, ...]
    member_paths: tuple[str, ...] = ()
    centroid: tuple[float, float, float] | None = None


@dataclass(frozen=True)
class FunctionalGraph:
    units: tuple[UnitNode, ...] = ()
    edges: frozenset[tuple[int, int]] = frozenset()
    outer_iterations: int = field(default=0, compare=False)

    def __post_init__(self):
        for i, j in self.edges:
            if i == j:
                raise ValueError("functional graph with a self-edge")
        object.__setattr__(self, "edges", frozenset((min(i, j), max(i, j)) for i, j in self.edges))

    def degree(self, index: int) -> int:
        return sum(index in e for e in self.edges)

    def signature(self):
        """Topology for comparisons: unit groups, seed paths and edges."""
        return (
            tuple((u.index, u.unit_group, tuple(sorted(u.seed_paths))) for u in self.units),
            tuple(sorted(self.edges)),
        )

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "units": [
                {
                    "index": u.index,
                    "unit_group": u.unit_group,
                    "seed_paths": list(u.seed_paths),
                    "member_paths": list(u.member_paths),
                    "centroid": list(u.centroid) if u.centroid is not None else None,
                }
                for u in self.units
            ],
            "edges": [list(e) for e in sorted(self.edges)],
            "outer_iterations": self.outer_iterations,
        }

    @classmethod
    def from_dict(cls, doc) -> "FunctionalGraph":
        if doc.get("schema", SCHEMA) != SCHEMA:
            from .errors import SchemaVersionMismatch

            raise SchemaVersionMismatch(f"expected schema {SCHEMA!r}, got {doc.get('schema')!r}")
        units = tuple(
            UnitNode(
                int(u["index"]),
                u["unit_group"],
                tuple(u["seed_paths"]),
                tuple(u.get("member_paths", ())),
                tuple(u["centroid"]) if u.get("centroid") is not None else None,
            )
            for u in doc.get("units", [])
        )
        edges = frozenset((int(a), int(b)) for a, b in doc.get("edges", []))
        return cls(units, edges, int(doc.get("outer_iterations", 0)))


def semantic_map(graph: SceneGraph) -> dict[int, str]:
    return {n.id: n.group_label for n in graph.mesh_nodes() if n.group_label is not None}


def identify_functional_units(
    graph: SceneGraph, functional_groups: Iterable[str] = DEFAULT_FUNCTIONAL_GROUPS
) -> list[FunctionalUnit]:
    """Connected components of same-label nodes, for each functional group.

    Units are indexed 1..k in order of their smallest member path.
    """
    functional_groups = set(functional_groups)
    meshes = graph.mesh_nodes()
    unlabeled = sum(n.group_label is None for n in meshes)
    if unlabeled:
        logger.warning("%d unlabeled mesh nodes ignored for functional units", unlabeled)
    label = {n.id: n.group_label for n in meshes if n.group_label in functional_groups}
    adj = graph.adjacency(ADJACENT)
    seen: set[int] = set()
    comps = []
    for start in sorted(label):
        if start in seen:
            continue
        comp, stack = {start}, [start]
        seen.add(start)
        while stack:
            v = stack.pop()
            for u in adj.get(v, ()):
                if u not in seen and label.get(u) == label[start]:
                    seen.add(u)
                    comp.add(u)
                    stack.append(u)
        comps.append((min(graph.nodes[i].path for i in comp), label[start], frozenset(comp)))
    comps.sort(key=lambda c: c[0])
    return [FunctionalUnit(i + 1, group, members) for i, (_, group, members) in enumerate(comps)]


def expand_units(
    graph: SceneGraph,
    semantics: Mapping[int, str],
    pipe_groups: Iterable[str],
    units: Sequence[FunctionalUnit],
) -> tuple[list[set[int]], int]:
    """Grow units through connector nodes; returns (member sets, passes).

    Units are visited in ascending index, members and their neighbours in
    ascending node id, which fixes who claims a contested connector.
    """
    pipe_groups = set(pipe_groups)
    members = [set(u.member_nodes) for u in sorted(units, key=lambda u: u.index)]
    marked: set[int] = set()
    for m in members:
        if marked & m:
            raise OverlappingUnits(f"units share nodes {sorted(marked & m)}")
        marked |= m
    adj = graph.adjacency(ADJACENT)
    passes = 0
    while True:
        passes += 1
        size_before = len(marked)
        for f in members:
            new: set[int] = set()
            for v in sorted(f):
                for u in adj.get(v, ()):
                    if u not in marked and semantics.get(u) in pipe_groups:
                        new.add(u)
                        marked.add(u)
            f |= new
        if len(marked) == size_before:
            break
    return members, passes


def extract_functional_relations(
    graph: SceneGraph,
    semantics: Mapping[int, str] | None = None,
    pipe_groups: Iterable[str] = DEFAULT_PIPE_GROUPS,
    units: Sequence[FunctionalUnit] | None = None,
    functional_groups: Iterable[str] = DEFAULT_FUNCTIONAL_GROUPS,
) -> FunctionalGraph:
    """Functional graph of the units in ``graph``.

    ``semantics`` maps node id to group label (default: the graph's labels;
    unlabeled nodes are never connectors). ``units`` defaults to
    :func:`identify_functional_units` over ``functional_groups``.
    """
    if semantics is None:
        semantics = semantic_map(graph)
    if units is None:
        units = identify_functional_units(graph, functional_groups)
    units = sorted(units, key=lambda u: u.index)
    members, passes = expand_units(graph, semantics, pipe_groups, units)

    owner: dict[int, int] = {}
    for unit, m in zip(units, members):
        for v in m:
            owner[v] = unit.index
    edges = set()
    for e in graph.edges:
        if e.kind != ADJACENT:
            continue
        i, j = owner.get(e.source), owner.get(e.target)
        if i is not None and j is not None and i != j:
            edges.add((min(i, j), max(i, j)))

    nodes = []
    for unit, m in zip(units, members):
        seeds = sorted(unit.seed_nodes)
        cents = [graph.nodes[i].centroid for i in seeds if graph.nodes[i].centroid is not None]
        centroid = tuple(np.mean(cents, axis=0).tolist()) if cents else None
        nodes.append(
            UnitNode(
                unit.index,
                unit.unit_group,
                tuple(sorted(graph.nodes[i].path for i in seeds)),
                tuple(sorted(graph.nodes[i].path for i in m)),
                centroid,
            )
        )
    logger.info("functional graph: %d units, %d edges, %d passes", len(nodes), len(edges), passes)
    return FunctionalGraph(tuple(nodes), frozenset(edges), passes)


def serialize(fg: FunctionalGraph) -> bytes:
    return json.dumps(fg.to_dict(), sort_keys=True, indent=1).encode("utf-8")


def deserialize(data: bytes | str) -> FunctionalGraph:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return FunctionalGraph.from_dict(json.loads(data))


def export_dot(fg: FunctionalGraph, name: str = "functional") -> str:
    lines = [f"graph {name} {{"]
    for u in sorted(fg.units, key=lambda u: u.index):
        label = f"{u.index}: {u.unit_group}".replace('"', '\\"')
        attrs = f'label="{label}"'
        if u.centroid is not None:
            attrs += ', centroid="' + ",".join(f"{c:.3f}" for c in u.centroid) + '"'
        lines.append(f"  u{u.index} [{attrs}];")
    for i, j in sorted(fg.edges):
        lines.append(f"  u{i} -- u{j};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def export_functional_graph(fg: FunctionalGraph) -> tuple[str, str]:
    """(JSON text, DOT text)."""
    return serialize(fg).decode("utf-8"), export_dot(fg)
