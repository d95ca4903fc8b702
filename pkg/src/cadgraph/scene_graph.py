"""The layered scene graph: mesh-group nodes, cluster parents, and edges."""

from __future__ import annotations

import dataclasses
import fnmatch
import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, NamedTuple, Sequence

from .clustering import NOISE, Clustering
from .errors import SchemaVersionMismatch, UnknownGroupInAdjacency, UnknownSelector
from .geometry import Box3

SCHEMA = "cadgraph/1"

MESH = "MESH"
CLUSTER = "CLUSTER"
ADJACENT = "ADJACENT"
MEMBER_OF = "MEMBER_OF"


class Edge(NamedTuple):
    source: int
    target: int
    kind: str


@dataclass(frozen=True)
class Node:
    id: int
    kind: str
    path: str
    centroid: tuple[float, float, float] | None = None
    aabb: Box3 | None = None
    group_label: str | None = None
    name_label: str | None = None
    member_paths: tuple[str, ...] = ()
    cluster: int | None = None
    label_provenance: str | None = None
    extra: Mapping[str, Any] = field(default_factory=dict, compare=True, hash=False)

    _KNOWN = (
        "id",
        "kind",
        "path",
        "centroid",
        "aabb",
        "group_label",
        "name_label",
        "member_paths",
        "cluster",
        "label_provenance",
    )

    def to_dict(self) -> dict:
        d = dict(self.extra)
        d.update(
            id=self.id,
            kind=self.kind,
            path=self.path,
            centroid=list(self.centroid) if self.centroid is not None else None,
            aabb=self.aabb.to_list() if self.aabb is not None else None,
            group_label=self.group_label,
            name_label=self.name_label,
            member_paths=list(self.member_paths),
            cluster=self.cluster,
            label_provenance=self.label_provenance,
        )
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Node":
        extra = {k: v for k, v in d.items() if k not in cls._KNOWN}
        return cls(
            id=int(d["id"]),
            kind=d["kind"],
            path=d["path"],
            centroid=tuple(d["centroid"]) if d.get("centroid") is not None else None,
            aabb=Box3.from_list(d["aabb"]) if d.get("aabb") is not None else None,
            group_label=d.get("group_label"),
            name_label=d.get("name_label"),
            member_paths=tuple(d.get("member_paths", ())),
            cluster=d.get("cluster"),
            label_provenance=d.get("label_provenance"),
            extra=extra,
        )


@dataclass(frozen=True)
class SceneGraph:
    nodes: Mapping[int, Node] = field(default_factory=dict)
    edges: frozenset[Edge] = frozenset()
    extra: Mapping[str, Any] = field(default_factory=dict)

    def mesh_nodes(self) -> list[Node]:
        return [self.nodes[i] for i in sorted(self.nodes) if self.nodes[i].kind == MESH]

    def cluster_nodes(self) -> list[Node]:
        return [self.nodes[i] for i in sorted(self.nodes) if self.nodes[i].kind == CLUSTER]

    def sorted_edges(self) -> list[Edge]:
        return sorted(self.edges)

    def adjacency(self, kind: str = ADJACENT) -> dict[int, list[int]]:
        """Node id -> sorted neighbour ids over edges of ``kind``."""
        out: dict[int, list[int]] = {i: [] for i in self.nodes}
        for e in self.edges:
            if e.kind == kind:
                out[e.source].append(e.target)
                out[e.target].append(e.source)
        return {k: sorted(v) for k, v in out.items()}

    def neighbors(self, node_id: int, kind: str = ADJACENT) -> list[int]:
        return sorted(
            {e.target for e in self.edges if e.kind == kind and e.source == node_id}
            | {e.source for e in self.edges if e.kind == kind and e.target == node_id}
        )

    def node_by_path(self, path: str) -> Node:
        for node in self.nodes.values():
            if node.path == path:
                return node
        raise KeyError(path)

    def with_labels(self, labels: Mapping[str, Any]) -> "SceneGraph":
        """Copy with (group, name) labels attached to mesh nodes by path."""
        nodes = {}
        for nid, node in self.nodes.items():
            lab = labels.get(node.path) if node.kind == MESH else None
            if lab is not None:
                group, name, prov = _label_fields(lab)
                node = dataclasses.replace(
                    node, group_label=group, name_label=name, label_provenance=prov
                )
            nodes[nid] = node
        return SceneGraph(nodes, self.edges, dict(self.extra))

    def translated(self, offset: Sequence[float]) -> "SceneGraph":
        def shift(node: Node) -> Node:
            if node.centroid is None:
                return node
            c = tuple(float(a + b) for a, b in zip(node.centroid, offset))
            box = node.aabb
            if box is not None:
                box = Box3(
                    tuple(a + b for a, b in zip(box.min, offset)),
                    tuple(a + b for a, b in zip(box.max, offset)),
                )
            return dataclasses.replace(node, centroid=c, aabb=box)

        return SceneGraph({k: shift(v) for k, v in self.nodes.items()}, self.edges, dict(self.extra))


def _label_fields(lab) -> tuple[str, str, str | None]:
    if isinstance(lab, Mapping):
        return lab["group"], lab["name"], lab.get("provenance")
    prov = getattr(lab, "provenance", None)
    return lab.group, lab.name, getattr(prov, "value", prov)


def build_scene_graph(
    groups: Sequence,
    clustering: Clustering,
    adjacency: Iterable[tuple[int, int]],
    labels: Mapping[str, Any] | None = None,
) -> SceneGraph:
    """Assemble mesh nodes, cluster parents and intra-cluster adjacency.

    Mesh node ids are the group ids; cluster nodes follow after the largest
    group id. Adjacency pairs that span two clusters are dropped.
    """
    labels = labels or {}
    by_id = {int(g.id): g for g in groups}
    if not clustering.labels:
        return SceneGraph()
    for gid in by_id:
        cid = clustering.labels.get(gid, NOISE)
        if cid == NOISE:
            raise ValueError(f"group {gid} has no cluster id")
    base = max(by_id) + 1 if by_id else 0

    nodes: dict[int, Node] = {}
    edges: set[Edge] = set()
    for gid in sorted(by_id):
        g = by_id[gid]
        cid = clustering.labels[gid]
        node = Node(
            id=gid,
            kind=MESH,
            path=g.representative_path,
            centroid=tuple(float(c) for c in g.centroid),
            aabb=g.aabb,
            member_paths=tuple(g.member_paths),
            cluster=cid,
        )
        lab = labels.get(g.representative_path)
        if lab is not None:
            group, name, prov = _label_fields(lab)
            node = dataclasses.replace(node, group_label=group, name_label=name, label_provenance=prov)
        nodes[gid] = node
        edges.add(Edge(gid, base + cid, MEMBER_OF))

    for cid, members in clustering.clusters().items():
        members = [m for m in members if m in by_id]
        if not members:
            continue
        box = Box3.union(by_id[m].aabb for m in members)
        nodes[base + cid] = Node(
            id=base + cid,
            kind=CLUSTER,
            path=f"cluster/{cid}",
            centroid=tuple(float(c) for c in box.center),
            aabb=box,
            member_paths=tuple(sorted(p for m in members for p in by_id[m].member_paths)),
            cluster=cid,
        )

    for a, b in adjacency:
        if a not in by_id or b not in by_id:
            raise UnknownGroupInAdjacency(f"adjacency pair ({a}, {b}) names an unknown group")
        if a == b or clustering.labels[a] != clustering.labels[b]:
            continue
        edges.add(Edge(min(a, b), max(a, b), ADJACENT))
    return SceneGraph(nodes, frozenset(edges))


# --------------------------------------------------------------------------
# serialization


def to_dict(graph: SceneGraph) -> dict:
    doc = dict(graph.extra)
    doc["schema"] = SCHEMA
    doc["nodes"] = [graph.nodes[i].to_dict() for i in sorted(graph.nodes)]
    doc["edges"] = [{"source": e.source, "target": e.target, "kind": e.kind} for e in graph.sorted_edges()]
    return doc


def serialize(graph: SceneGraph) -> bytes:
    return json.dumps(to_dict(graph), sort_keys=True, indent=1).encode("utf-8")


def from_dict(doc: Mapping[str, Any]) -> SceneGraph:
    if doc.get("schema") != SCHEMA:
        raise SchemaVersionMismatch(f"expected schema {SCHEMA!r}, got {doc.get('schema')!r}")
    nodes = {}
    for nd in doc.get("nodes", []):
        node = Node.from_dict(nd)
        nodes[node.id] = node
    edges = frozenset(
        Edge(int(e["source"]), int(e["target"]), e["kind"]) for e in doc.get("edges", [])
    )
    extra = {k: v for k, v in doc.items() if k not in ("schema", "nodes", "edges")}
    return SceneGraph(nodes, edges, extra)


def deserialize(data: bytes | str) -> SceneGraph:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return from_dict(json.loads(data))


def _dot_quote(text: str) -> str:
    return '"' + str(text).replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_dot(graph: SceneGraph, include_clusters: bool = True, name: str = "scene") -> str:
    """Undirected Graphviz document; node and edge order is sorted by id."""
    lines = [f"graph {name} {{"]
    for nid in sorted(graph.nodes):
        node = graph.nodes[nid]
        if node.kind == CLUSTER and not include_clusters:
            continue
        if node.kind == CLUSTER:
            label = f"cluster {node.cluster}"
            attrs = f"label={_dot_quote(label)}, shape=box, kind=CLUSTER"
        else:
            label = node.name_label or node.path
            attrs = f"label={_dot_quote(label)}, kind=MESH, path={_dot_quote(node.path)}"
            if node.group_label:
                attrs += f", group={_dot_quote(node.group_label)}"
        lines.append(f"  n{nid} [{attrs}];")
    for e in graph.sorted_edges():
        if e.kind == MEMBER_OF and not include_clusters:
            continue
        style = ", style=dashed" if e.kind == MEMBER_OF else ""
        lines.append(f"  n{e.source} -- n{e.target} [kind={e.kind}{style}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# queries

SELECTORS = ("group_label", "name_label", "cluster", "path", "neighbors")


def query(graph: SceneGraph, selector: str, value) -> list[Node]:
    """Select mesh nodes.

    Selectors: ``group_label`` / ``name_label`` (exact label), ``cluster``
    (cluster id), ``path`` (glob over mesh paths), ``neighbors`` (node id;
    spatially adjacent mesh nodes).
    """
    meshes = graph.mesh_nodes()
    if selector == "group_label":
        return [n for n in meshes if n.group_label == value]
    if selector == "name_label":
        return [n for n in meshes if n.name_label == value]
    if selector == "cluster":
        return [n for n in meshes if n.cluster == int(value)]
    if selector == "path":
        return [n for n in meshes if fnmatch.fnmatchcase(n.path, value)]
    if selector == "neighbors":
        return [graph.nodes[i] for i in graph.neighbors(int(value), ADJACENT)]
    raise UnknownSelector(f"unknown selector {selector!r}; expected one of {SELECTORS}")
