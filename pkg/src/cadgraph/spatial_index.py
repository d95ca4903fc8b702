"""Uniform-grid spatial hashing over group point sets.

Replaces a dense all-pairs distance matrix with a sparse map holding only the
group pairs closer than a cutoff. All point sets share one voxel lattice, so
distances are computed exactly from integer lattice offsets:
``distance = pitch * sqrt(dx**2 + dy**2 + dz**2)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import EmptyPointSet, EpsilonExceedsCutoff
from .geometry import DEFAULT_PITCH, PointSet

ABOVE_CUTOFF = math.inf

_BITS = 21
_OFF = 1 << (_BITS - 1)
_MASK = (1 << _BITS) - 1


def _encode(cells: np.ndarray) -> np.ndarray:
    c = cells.astype(np.int64) + _OFF
    return (c[:, 0] << (2 * _BITS)) | (c[:, 1] << _BITS) | c[:, 2]


def _encode_offset(o: Sequence[int]) -> int:
    return (int(o[0]) << (2 * _BITS)) + (int(o[1]) << _BITS) + int(o[2])


def _decode(keys: np.ndarray) -> np.ndarray:
    keys = np.asarray(keys, dtype=np.int64)
    return np.stack(
        [(keys >> (2 * _BITS)) & _MASK, (keys >> _BITS) & _MASK, keys & _MASK], axis=1
    ) - _OFF


def _k2_bound(length: float, pitch: float) -> int:
    """Largest integer squared lattice distance not exceeding ``length``."""
    r = length / pitch
    k2 = int(math.floor(r * r + 1e-9))
    while k2 > 0 and pitch * math.sqrt(k2) > length:
        k2 -= 1
    return k2


class _CellTable:
    """Points sorted by cell key, with per-cell start/count."""

    def __init__(self, lattice: np.ndarray, labels: np.ndarray, local: np.ndarray, block: int):
        cells = np.floor_divide(lattice, block)
        if len(cells) and np.abs(cells).max() >= _OFF - 64:
            raise ValueError("scene extent exceeds the grid index range")
        keys = _encode(cells) if len(cells) else np.zeros(0, dtype=np.int64)
        order = np.argsort(keys, kind="stable")
        self.point_keys = keys[order]
        self.lattice = lattice[order]
        self.labels = labels[order]
        self.local = local[order]
        self.keys, self.start, self.count = np.unique(
            self.point_keys, return_index=True, return_counts=True
        )

    def subset(self, mask: np.ndarray) -> "_CellTable":
        t = object.__new__(_CellTable)
        t.point_keys = self.point_keys[mask]
        t.lattice = self.lattice[mask]
        t.labels = self.labels[mask]
        t.local = self.local[mask]
        t.keys, t.start, t.count = np.unique(t.point_keys, return_index=True, return_counts=True)
        return t


def _join(a: _CellTable, b: _CellTable, offset: int) -> tuple[np.ndarray, np.ndarray]:
    """All point pairs (ia, ib) with cell(ib) == cell(ia) + offset."""
    if len(a.keys) == 0 or len(b.keys) == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    shifted = a.keys + offset
    pos = np.searchsorted(b.keys, shifted)
    pos_c = np.minimum(pos, len(b.keys) - 1)
    hit = (pos < len(b.keys)) & (b.keys[pos_c] == shifted)
    if not hit.any():
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    a_start, a_len = a.start[hit], a.count[hit]
    b_start, b_len = b.start[pos_c[hit]], b.count[pos_c[hit]]
    sizes = a_len * b_len
    pair = np.repeat(np.arange(len(sizes)), sizes)
    t = np.arange(sizes.sum()) - np.repeat(np.cumsum(sizes) - sizes, sizes)
    ia = a_start[pair] + t // b_len[pair]
    ib = b_start[pair] + t % b_len[pair]
    return ia, ib


def _cell_offsets(block: int, k2_max: int, half: bool = False) -> list[tuple[int, int, int]]:
    """Cell offsets whose closest lattice points are within ``k2_max``."""
    reach = 0
    while ((reach + 1) * block - (block - 1)) ** 2 <= k2_max:
        reach += 1
    out = []
    for o in itertools.product(range(-reach, reach + 1), repeat=3):
        gaps = [max(abs(c) * block - (block - 1), 0) for c in o]
        if sum(g * g for g in gaps) > k2_max:
            continue
        if half and o <= (0, 0, 0):
            continue
        out.append(o)
    return out


def _shell_offsets(k: int) -> list[tuple[int, int, int]]:
    rng = range(-k, k + 1)
    return [o for o in itertools.product(rng, repeat=3) if max(abs(c) for c in o) == k]


@dataclass(frozen=True, eq=False)
class GridIndex:
    """Immutable uniform grid over the points of many groups."""

    cell_size: float
    pitch: float
    block: int
    table: _CellTable
    group_sizes: Mapping[int, int]

    @property
    def cells(self) -> dict[tuple[int, int, int], list[tuple[int, int]]]:
        """Cell coordinate -> [(group id, point index within the group)]."""
        out = {}
        coords = _decode(self.table.keys)
        for c, s, n in zip(coords.tolist(), self.table.start.tolist(), self.table.count.tolist()):
            out[tuple(c)] = [
                (int(self.table.labels[i]), int(self.table.local[i])) for i in range(s, s + n)
            ]
        return out

    @property
    def point_count(self) -> int:
        return len(self.table.labels)

    def neighborhood(self, point: Sequence[float], rings: int = 1) -> list[tuple[int, int]]:
        """Indexed (group id, point index) entries in the cells around ``point``."""
        lattice = np.floor(np.asarray(point, dtype=float) / self.pitch + 1e-9).astype(np.int64)
        centre = np.floor_divide(lattice, self.block)
        found = []
        grid_cells = self.cells
        for o in itertools.product(range(-rings, rings + 1), repeat=3):
            found.extend(grid_cells.get(tuple((centre + o).tolist()), []))
        return sorted(found)


def _pointsets(groups) -> dict[int, PointSet]:
    if isinstance(groups, Mapping):
        return {int(k): v for k, v in groups.items()}
    out = {}
    for i, g in enumerate(groups):
        if isinstance(g, PointSet):
            out[i] = g
        else:
            out[int(g.id)] = g.merged_points
    return out


def build_grid(groups, cell_size: float = DEFAULT_PITCH) -> GridIndex:
    """Index every point of every group exactly once.

    ``groups`` is a sequence of MeshGroup (keyed by ``.id``), a sequence of
    PointSet (keyed by position) or a mapping id -> PointSet. ``cell_size``
    must be a whole multiple of the shared lattice pitch.
    """
    if cell_size <= 0:
        raise ValueError("cell_size must be positive")
    sets = _pointsets(groups)
    pitches = {s.grid_pitch for s in sets.values()}
    if len(pitches) > 1:
        raise ValueError(f"groups use different lattice pitches: {sorted(pitches)}")
    pitch = pitches.pop() if pitches else cell_size
    block = round(cell_size / pitch)
    if block < 1 or not math.isclose(block * pitch, cell_size, rel_tol=1e-9):
        raise ValueError(f"cell_size {cell_size} is not a multiple of the pitch {pitch}")
    ids = sorted(sets)
    lattice = [sets[i].indices for i in ids]
    labels = [np.full(len(sets[i]), i, dtype=np.int64) for i in ids]
    local = [np.arange(len(sets[i]), dtype=np.int64) for i in ids]
    table = _CellTable(
        np.concatenate(lattice) if lattice else np.zeros((0, 3), dtype=np.int64),
        np.concatenate(labels) if labels else np.zeros(0, dtype=np.int64),
        np.concatenate(local) if local else np.zeros(0, dtype=np.int64),
        block,
    )
    return GridIndex(cell_size, pitch, block, table, {i: len(sets[i]) for i in ids})


@dataclass
class SparseDistanceMap:
    """Minimal distances of all group pairs within ``cutoff``.

    Keys are ordered pairs ``(a, b)`` with ``a < b``; lookups accept either
    order. A missing pair means the true distance exceeds the cutoff.
    """

    cutoff: float
    entries: dict[tuple[int, int], float] = field(default_factory=dict)

    def __post_init__(self):
        self.entries = {(min(a, b), max(a, b)): float(d) for (a, b), d in self.entries.items()}

    def get(self, a: int, b: int, default=ABOVE_CUTOFF) -> float:
        return self.entries.get((min(a, b), max(a, b)), default)

    def __contains__(self, pair) -> bool:
        a, b = pair
        return (min(a, b), max(a, b)) in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def items(self):
        return sorted(self.entries.items())

    def neighbors(self, epsilon: float) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for (a, b), d in self.items():
            if d <= epsilon:
                out.setdefault(a, []).append(b)
                out.setdefault(b, []).append(a)
        return out

    def to_dict(self) -> dict:
        return {"cutoff": self.cutoff, "entries": [[a, b, d] for (a, b), d in self.items()]}

    @classmethod
    def from_dict(cls, data) -> "SparseDistanceMap":
        return cls(data["cutoff"], {(int(a), int(b)): float(d) for a, b, d in data["entries"]})


def _group_id(g) -> int:
    return int(g) if isinstance(g, (int, np.integer)) else int(g.id)


def min_distance(a, b, grid: GridIndex, cutoff: float) -> float:
    """Exact minimal point distance between two indexed groups.

    Returns :data:`ABOVE_CUTOFF` when the distance exceeds ``cutoff``. Shells
    of cells around the query points are expanded until the best distance
    found is certified by the lower bound of the next shell.
    """
    ia, ib = _group_id(a), _group_id(b)
    for g in (ia, ib):
        if grid.group_sizes.get(g, 0) == 0:
            raise EmptyPointSet(f"group {g} has no indexed points")
    if grid.group_sizes[ia] > grid.group_sizes[ib]:
        ia, ib = ib, ia
    table = grid.table
    qa = table.subset(table.labels == ia)
    qb = table.subset(table.labels == ib)
    k2_cut = _k2_bound(cutoff, grid.pitch)
    best = None
    k = 0
    while True:
        for o in _shell_offsets(k):
            pa, pb = _join(qa, qb, _encode_offset(o))
            if len(pa):
                d = qa.lattice[pa] - qb.lattice[pb]
                m = int(np.einsum("ij,ij->i", d, d).min())
                best = m if best is None else min(best, m)
        bound = (k * grid.block + 1) ** 2
        if best is not None and best <= bound:
            break
        if bound > k2_cut:
            break
        k += 1
    if best is None or best > k2_cut:
        return ABOVE_CUTOFF
    return grid.pitch * math.sqrt(best)


def _reduce_min(keys: list[np.ndarray], vals: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    if not keys:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    k = np.concatenate(keys)
    v = np.concatenate(vals)
    uniq, inv = np.unique(k, return_inverse=True)
    out = np.full(len(uniq), np.iinfo(np.int64).max, dtype=np.int64)
    np.minimum.at(out, inv, v)
    return uniq, out


def pairwise_min_distances(groups, grid: GridIndex, cutoff: float = 0.05) -> SparseDistanceMap:
    """Sparse map of every group pair whose minimal distance is <= cutoff."""
    table = grid.table
    ids = sorted(_pointsets(groups)) if groups is not None else sorted(grid.group_sizes)
    wanted = np.isin(table.labels, ids)
    if not wanted.all():
        table = table.subset(wanted)
    k2_cut = _k2_bound(cutoff, grid.pitch)
    span = (max(ids) + 1) if ids else 1
    keys, vals = [], []
    for o in [(0, 0, 0)] + _cell_offsets(grid.block, k2_cut, half=True):
        pa, pb = _join(table, table, _encode_offset(o))
        if not len(pa):
            continue
        ga, gb = table.labels[pa], table.labels[pb]
        keep = ga != gb
        if not keep.any():
            continue
        pa, pb, ga, gb = pa[keep], pb[keep], ga[keep], gb[keep]
        d = table.lattice[pa] - table.lattice[pb]
        k2 = np.einsum("ij,ij->i", d, d)
        near = k2 <= k2_cut
        lo = np.minimum(ga, gb)[near]
        hi = np.maximum(ga, gb)[near]
        keys.append(lo * span + hi)
        vals.append(k2[near])
    uniq, best = _reduce_min(keys, vals)
    entries = {
        (int(u // span), int(u % span)): grid.pitch * math.sqrt(int(b))
        for u, b in zip(uniq.tolist(), best.tolist())
    }
    return SparseDistanceMap(cutoff, entries)


def nearest_groups(
    queries: Sequence[PointSet], grid: GridIndex, radius: float
) -> list[dict[int, float]]:
    """For each query point set, the indexed groups within ``radius``.

    Returns one mapping group id -> minimal distance per query.
    """
    if not queries:
        return []
    for q in queries:
        if not math.isclose(q.grid_pitch, grid.pitch, rel_tol=1e-12):
            raise ValueError("query pitch differs from the grid pitch")
    lattice = np.concatenate([q.indices for q in queries])
    labels = np.concatenate([np.full(len(q), i, dtype=np.int64) for i, q in enumerate(queries)])
    qtable = _CellTable(lattice, labels, np.zeros(len(labels), dtype=np.int64), grid.block)
    k2_cut = _k2_bound(radius, grid.pitch)
    span = (max(grid.group_sizes) + 1) if grid.group_sizes else 1
    keys, vals = [], []
    for o in _cell_offsets(grid.block, k2_cut):
        pa, pb = _join(qtable, grid.table, _encode_offset(o))
        if not len(pa):
            continue
        d = qtable.lattice[pa] - grid.table.lattice[pb]
        k2 = np.einsum("ij,ij->i", d, d)
        near = k2 <= k2_cut
        keys.append(qtable.labels[pa][near] * span + grid.table.labels[pb][near])
        vals.append(k2[near])
    uniq, best = _reduce_min(keys, vals)
    out: list[dict[int, float]] = [{} for _ in queries]
    for u, b in zip(uniq.tolist(), best.tolist()):
        out[u // span][u % span] = grid.pitch * math.sqrt(b)
    return out


def adjacency_pairs(d: SparseDistanceMap, epsilon: float = 0.01) -> list[tuple[int, int]]:
    """Group pairs whose distance is not larger than ``epsilon``."""
    if epsilon > d.cutoff:
        raise EpsilonExceedsCutoff(f"epsilon {epsilon} exceeds the map cutoff {d.cutoff}")
    return [pair for pair, dist in d.items() if dist <= epsilon]
