"""Per-mesh geometric reductions on a shared, origin-anchored voxel lattice.

All point sets live on the lattice ``(index + 0.5) * pitch``; two point sets
of equal pitch are therefore directly comparable voxel by voxel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyMesh

DEFAULT_PITCH = 0.01

# Added to coordinate/pitch before flooring so that coordinates which are
# decimal multiples of the pitch (1.03 / 0.01 = 102.99999999999999) land in
# the cell they name.
SNAP_GUARD = 1e-9

# Box extents at or below this are treated as degenerate (zero thickness).
DEGENERATE_EXTENT = 1e-12


def voxel_indices(points, pitch: float) -> np.ndarray:
    """Integer voxel index triple of each point."""
    if pitch <= 0:
        raise ValueError("pitch must be positive")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return np.floor(pts / pitch + SNAP_GUARD).astype(np.int64)


def _unique_rows(indices: np.ndarray) -> np.ndarray:
    if len(indices) == 0:
        return indices.reshape(0, 3).astype(np.int64)
    return np.unique(indices, axis=0)


@dataclass(frozen=True, eq=False)
class PointSet:
    """Deduplicated voxel-center samples of one mesh (or mesh group).

    Points are stored as their integer voxel indices, sorted
    lexicographically; :attr:`points` gives the metric voxel centers.
    """

    indices: np.ndarray
    grid_pitch: float = DEFAULT_PITCH
    source_mesh: str = ""

    def __post_init__(self):
        idx = _unique_rows(np.asarray(self.indices, dtype=np.int64).reshape(-1, 3))
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @classmethod
    def from_points(cls, points, pitch: float = DEFAULT_PITCH, source_mesh: str = "") -> "PointSet":
        return cls(voxel_indices(points, pitch), pitch, source_mesh)

    @classmethod
    def union(cls, sets: Sequence["PointSet"], source_mesh: str = "") -> "PointSet":
        if not sets:
            raise EmptyMesh("union of zero point sets")
        pitch = sets[0].grid_pitch
        if any(not math.isclose(s.grid_pitch, pitch, rel_tol=1e-12) for s in sets):
            raise ValueError("cannot merge point sets of different pitch")
        return cls(np.concatenate([s.indices for s in sets]), pitch, source_mesh)

    @property
    def points(self) -> np.ndarray:
        return (self.indices + 0.5) * self.grid_pitch

    def __len__(self) -> int:
        return len(self.indices)

    def __eq__(self, other):
        if not isinstance(other, PointSet):
            return NotImplemented
        return self.grid_pitch == other.grid_pitch and np.array_equal(self.indices, other.indices)

    def index_set(self) -> set[tuple[int, int, int]]:
        return set(map(tuple, self.indices.tolist()))


@dataclass(frozen=True)
class Box3:
    min: tuple[float, float, float]
    max: tuple[float, float, float]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.min)
        hi = tuple(float(v) for v in self.max)
        if any(a > b for a, b in zip(lo, hi)):
            raise ValueError(f"box min {lo} exceeds max {hi}")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @property
    def extents(self) -> np.ndarray:
        return np.subtract(self.max, self.min)

    @property
    def center(self) -> np.ndarray:
        return (np.asarray(self.min) + np.asarray(self.max)) / 2.0

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.extents))

    def contains(self, other: "Box3 | Sequence[float]", tol: float = 0.0) -> bool:
        if isinstance(other, Box3):
            return self.contains(other.min, tol) and self.contains(other.max, tol)
        p = np.asarray(other, dtype=float)
        return bool(np.all(p >= np.asarray(self.min) - tol) and np.all(p <= np.asarray(self.max) + tol))

    def inflate(self, margin: float) -> "Box3":
        return Box3(tuple(np.asarray(self.min) - margin), tuple(np.asarray(self.max) + margin))

    @staticmethod
    def union(boxes: Iterable["Box3"]) -> "Box3":
        boxes = list(boxes)
        if not boxes:
            raise ValueError("union of zero boxes")
        lo = np.min([b.min for b in boxes], axis=0)
        hi = np.max([b.max for b in boxes], axis=0)
        return Box3(tuple(lo), tuple(hi))

    def to_list(self) -> list[list[float]]:
        return [list(self.min), list(self.max)]

    @classmethod
    def from_list(cls, data) -> "Box3":
        return cls(tuple(data[0]), tuple(data[1]))


def _check_mesh(mesh):
    if len(mesh.vertices) == 0:
        raise EmptyMesh(f"{mesh.path}: mesh has no vertices")


def voxelize_points(points, pitch: float = DEFAULT_PITCH, source_mesh: str = "") -> PointSet:
    return PointSet.from_points(points, pitch, source_mesh)


def voxelize_vertices(mesh, pitch: float = DEFAULT_PITCH) -> PointSet:
    """Snap every vertex to its voxel center and drop duplicates."""
    _check_mesh(mesh)
    return PointSet.from_points(mesh.vertices, pitch, mesh.path)


def unique_edges(faces: np.ndarray) -> np.ndarray:
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if len(faces) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    edges = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    return np.unique(np.sort(edges, axis=1), axis=0)


def edge_sample_points(vertices, faces, spacing: float = DEFAULT_PITCH) -> np.ndarray:
    """Evenly spaced points along every triangle edge, before snapping.

    An edge of length L yields ceil(L / spacing) + 1 points including both
    endpoints. Exact duplicates (shared endpoints) are removed.
    """
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    edges = unique_edges(faces)
    if len(edges) == 0:
        return np.zeros((0, 3))
    a = vertices[edges[:, 0]]
    b = vertices[edges[:, 1]]
    length = np.linalg.norm(b - a, axis=1)
    counts = np.ceil(length / spacing - SNAP_GUARD).astype(np.int64) + 1
    counts = np.maximum(counts, 1)
    edge_id = np.repeat(np.arange(len(edges)), counts)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    k = np.arange(counts.sum()) - starts[edge_id]
    t = (k / np.maximum(counts - 1, 1)[edge_id])[:, None]
    pts = a[edge_id] * (1.0 - t) + b[edge_id] * t
    return np.unique(pts, axis=0)


def interior_sample_points(vertices, faces, spacing: float = DEFAULT_PITCH) -> np.ndarray:
    """Barycentric lattice points covering each triangle's interior."""
    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if len(faces) == 0:
        return np.zeros((0, 3))
    tri = vertices[faces]
    longest = np.max(
        np.linalg.norm(tri - np.roll(tri, 1, axis=1), axis=2), axis=1
    )
    steps = np.maximum(np.ceil(longest / spacing - SNAP_GUARD).astype(np.int64), 1)
    out = []
    for n in np.unique(steps):
        sel = tri[steps == n]
        i, j = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
        keep = (i + j) <= n
        u = (i[keep] / n)[:, None]
        v = (j[keep] / n)[:, None]
        w = 1.0 - u - v
        # (faces, samples, 3)
        pts = sel[:, None, 0] * w + sel[:, None, 1] * u + sel[:, None, 2] * v
        out.append(pts.reshape(-1, 3))
    return np.concatenate(out)


def sample_face_edges(mesh, spacing: float = DEFAULT_PITCH, fill_interior: bool = False) -> PointSet:
    """Edge samples of every face, snapped to the ``spacing`` lattice.

    With ``fill_interior`` the triangle interiors are sampled as well.
    """
    _check_mesh(mesh)
    pts = edge_sample_points(mesh.vertices, mesh.faces, spacing)
    if fill_interior:
        pts = np.concatenate([pts, interior_sample_points(mesh.vertices, mesh.faces, spacing)])
    return PointSet.from_points(pts, spacing, mesh.path)


def surface_points(mesh, pitch: float = DEFAULT_PITCH, fill_interior: bool = False) -> PointSet:
    """Union of snapped vertices and snapped edge samples.

    This is the only geometry used for inter-mesh distances.
    """
    return PointSet.union(
        [voxelize_vertices(mesh, pitch), sample_face_edges(mesh, pitch, fill_interior)],
        source_mesh=mesh.path,
    )


def aabb(mesh) -> Box3:
    _check_mesh(mesh)
    return Box3(tuple(mesh.vertices.min(axis=0)), tuple(mesh.vertices.max(axis=0)))


def centroid(points: PointSet) -> np.ndarray:
    if len(points) == 0:
        raise EmptyMesh(f"{points.source_mesh}: centroid of an empty point set")
    return points.points.mean(axis=0)


def volume_proxy(box: Box3, pitch: float = DEFAULT_PITCH) -> float:
    """AABB extent product; zero-thickness axes count as one pitch."""
    ext = box.extents
    ext = np.where(ext <= DEGENERATE_EXTENT, pitch, ext)
    return float(np.prod(ext))
