"""DBSCAN over a sparse distance map, plus a union-find component oracle."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable

from .errors import EpsilonExceedsCutoff
from .spatial_index import SparseDistanceMap

NOISE = -1
_UNSEEN = -2


@dataclass(frozen=True)
class Clustering:
    """Cluster id per group id; ``NOISE`` marks unclustered groups.

    Cluster ids are consecutive and ordered by each cluster's smallest
    member id.
    """

    labels: dict[int, int]
    epsilon: float | None = None
    min_samples: int = 1

    @property
    def n_clusters(self) -> int:
        return len({c for c in self.labels.values() if c != NOISE})

    def clusters(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for gid in sorted(self.labels):
            c = self.labels[gid]
            if c != NOISE:
                out.setdefault(c, []).append(gid)
        return dict(sorted(out.items()))

    def noise(self) -> list[int]:
        return sorted(g for g, c in self.labels.items() if c == NOISE)

    def partition(self) -> frozenset[frozenset[int]]:
        return frozenset(frozenset(m) for m in self.clusters().values())

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "min_samples": self.min_samples,
            "labels": {str(k): v for k, v in sorted(self.labels.items())},
        }

    @classmethod
    def from_dict(cls, data) -> "Clustering":
        return cls(
            {int(k): int(v) for k, v in data["labels"].items()},
            data.get("epsilon"),
            int(data.get("min_samples", 1)),
        )


def _canonical(raw: dict[int, int]) -> dict[int, int]:
    """Renumber clusters by their smallest member id."""
    first: dict[int, int] = {}
    for gid in sorted(raw):
        c = raw[gid]
        if c != NOISE and c not in first:
            first[c] = len(first)
    return {gid: (first[c] if c != NOISE else NOISE) for gid, c in raw.items()}


def dbscan(n: int, d: SparseDistanceMap, epsilon: float = 0.01, min_samples: int = 1) -> Clustering:
    """Density-based clustering of groups ``0..n-1``.

    A group is a core point when at least ``min_samples`` groups (itself
    included) lie within ``epsilon``. Border groups join the first cluster
    that reaches them in id order.
    """
    if epsilon > d.cutoff:
        raise EpsilonExceedsCutoff(f"epsilon {epsilon} exceeds the map cutoff {d.cutoff}")
    if min_samples < 1:
        raise ValueError("min_samples must be >= 1")
    neighbors: list[list[int]] = [[] for _ in range(n)]
    for (a, b), dist in d.items():
        if dist <= epsilon and a < n and b < n:
            neighbors[a].append(b)
            neighbors[b].append(a)
    for nb in neighbors:
        nb.sort()
    core = [len(nb) + 1 >= min_samples for nb in neighbors]

    labels = [_UNSEEN] * n
    cid = 0
    for i in range(n):
        if labels[i] != _UNSEEN:
            continue
        if not core[i]:
            labels[i] = NOISE
            continue
        labels[i] = cid
        queue = deque(neighbors[i])
        while queue:
            j = queue.popleft()
            if labels[j] == NOISE:
                labels[j] = cid
                continue
            if labels[j] != _UNSEEN:
                continue
            labels[j] = cid
            if core[j]:
                queue.extend(neighbors[j])
        cid += 1
    return Clustering(_canonical(dict(enumerate(labels))), epsilon, min_samples)


class UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return True


def connected_components(pairs: Iterable[tuple[int, int]], n: int) -> Clustering:
    uf = UnionFind(n)
    for a, b in pairs:
        uf.union(a, b)
    return Clustering(_canonical({i: uf.find(i) for i in range(n)}), None, 1)
