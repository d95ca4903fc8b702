"""Random scene graphs and functional graphs for round-trip tests."""

from __future__ import annotations

import random
from dataclasses import dataclass

from cadgraph.clustering import connected_components
from cadgraph.functional import FunctionalGraph, UnitNode
from cadgraph.geometry import Box3
from cadgraph.labeling import Provenance, SemanticLabel
from cadgraph.scene_graph import build_scene_graph

GROUPS = {
    "Pipe assembly": ["Straight pipe", "Pipe elbow"],
    "Valve assembly": ["Gate valve", "Handwheel"],
    "Gauge": ["Pressure gauge"],
}


@dataclass
class FakeGroup:
    id: int
    representative_path: str
    member_paths: tuple[str, ...]
    aabb: Box3
    centroid: tuple[float, float, float]


def random_scene_graph(rng: random.Random, n: int | None = None):
    n = n or rng.randint(1, 40)
    groups = []
    for i in range(n):
        lo = tuple(rng.uniform(-10, 10) for _ in range(3))
        hi = tuple(a + rng.uniform(0.01, 2) for a in lo)
        members = tuple(sorted(f"/r/m{i:03d}/{k}" for k in range(rng.randint(1, 3))))
        c = tuple((a + b) / 2 for a, b in zip(lo, hi))
        groups.append(FakeGroup(i, members[0], members, Box3(lo, hi), c))
    pairs = [(a, b) for a in range(n) for b in range(a + 1, n) if rng.random() < 3 / n]
    clustering = connected_components(pairs, n)
    labels = {}
    for g in groups:
        if rng.random() < 0.7:
            group = rng.choice(sorted(GROUPS))
            labels[g.representative_path] = SemanticLabel(group, rng.choice(GROUPS[group]), Provenance.MODEL)
    return build_scene_graph(groups, clustering, pairs, labels)


def random_functional_graph(rng: random.Random) -> FunctionalGraph:
    k = rng.randint(0, 12)
    units = tuple(
        UnitNode(
            i + 1,
            rng.choice(["Valve assembly", "Gauge", "Tank"]),
            tuple(sorted(f"/u{i}/s{j}" for j in range(rng.randint(1, 3)))),
            tuple(sorted(f"/u{i}/m{j}" for j in range(rng.randint(0, 4)))),
            tuple(rng.uniform(-5, 5) for _ in range(3)) if rng.random() < 0.8 else None,
        )
        for i in range(k)
    )
    edges = {(a, b) for a in range(1, k + 1) for b in range(a + 1, k + 1) if rng.random() < 0.3}
    return FunctionalGraph(units, frozenset(edges), rng.randint(1, 9))
