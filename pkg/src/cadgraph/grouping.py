"""Merge sub-threshold meshes into their nearest large neighbour."""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass
from typing import Mapping

from .geometry import DEFAULT_PITCH, Box3, PointSet, aabb, centroid, surface_points, volume_proxy
from .scene_io import Scene
from .spatial_index import build_grid, nearest_groups

logger = logging.getLogger(__name__)

DEFAULT_VOLUME_THRESHOLD = 1e-6
DEFAULT_R_MAX = 0.10


@dataclass(frozen=True)
class MeshGeometry:
    points: PointSet
    box: Box3
    volume: float


@dataclass(frozen=True, eq=False)
class MeshGroup:
    id: int
    representative_path: str
    member_paths: tuple[str, ...]
    merged_points: PointSet
    aabb: Box3
    centroid: tuple[float, float, float]
    promoted: bool = False

    def __eq__(self, other):
        if not isinstance(other, MeshGroup):
            return NotImplemented
        return (
            self.id == other.id
            and self.representative_path == other.representative_path
            and self.member_paths == other.member_paths
            and self.merged_points == other.merged_points
            and self.aabb == other.aabb
            and self.promoted == other.promoted
        )

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "representative_path": self.representative_path,
            "member_paths": list(self.member_paths),
            "aabb": self.aabb.to_list(),
            "centroid": list(self.centroid),
            "point_count": len(self.merged_points),
            "promoted": self.promoted,
        }


def groupable_meshes(scene: Scene):
    """Meshes that take part in grouping and clustering."""
    out = []
    for mesh in scene.meshes:
        if mesh.excluded or mesh.is_ground:
            continue
        if len(mesh.vertices) == 0:
            logger.warning("%s has no vertices; skipped", mesh.path)
            continue
        out.append(mesh)
    return out


def mesh_geometry(
    scene: Scene, pitch: float = DEFAULT_PITCH, fill_interior: bool = False
) -> dict[str, MeshGeometry]:
    out = {}
    for mesh in groupable_meshes(scene):
        box = aabb(mesh)
        out[mesh.path] = MeshGeometry(
            surface_points(mesh, pitch, fill_interior), box, volume_proxy(box, pitch)
        )
    return out


def classify_meshes(
    scene: Scene,
    v_thresh: float = DEFAULT_VOLUME_THRESHOLD,
    pitch: float = DEFAULT_PITCH,
    geometry: Mapping[str, MeshGeometry] | None = None,
) -> tuple[list[str], list[str]]:
    """Split active, non-ground meshes into (small, large) by volume proxy.

    A mesh whose proxy equals the threshold counts as small.
    """
    small, large = [], []
    for mesh in groupable_meshes(scene):
        if geometry is not None and mesh.path in geometry:
            vol = geometry[mesh.path].volume
        else:
            vol = volume_proxy(aabb(mesh), pitch)
        (small if vol <= v_thresh else large).append(mesh.path)
    return small, large


def _make_group(gid, rep, members, geometry, promoted=False) -> MeshGroup:
    members = tuple(sorted(members))
    points = PointSet.union([geometry[p].points for p in members], source_mesh=rep)
    box = Box3.union(geometry[p].box for p in members)
    return MeshGroup(gid, rep, members, points, box, tuple(centroid(points).tolist()), promoted)


def group_small_meshes(
    scene: Scene,
    v_thresh: float = DEFAULT_VOLUME_THRESHOLD,
    r_max: float = DEFAULT_R_MAX,
    pitch: float = DEFAULT_PITCH,
    geometry: Mapping[str, MeshGeometry] | None = None,
    fill_interior: bool = False,
) -> list[MeshGroup]:
    """Assign every small mesh to the closest large mesh within ``r_max``.

    Distances are minimal surface-point distances. Ties go to the
    lexicographically smallest large-mesh path. Small meshes with no large
    mesh in range are promoted to their own group; they never attract other
    small meshes. Groups are returned sorted by representative path, and a
    group's id is its position in that order.
    """
    if geometry is None:
        geometry = mesh_geometry(scene, pitch, fill_interior)
    small, large = classify_meshes(scene, v_thresh, pitch, geometry)
    members: dict[str, list[str]] = {p: [p] for p in large}
    promoted: list[str] = []

    if small and large:
        cell = math.ceil(r_max / pitch - 1e-9) * pitch
        grid = build_grid({i: geometry[p].points for i, p in enumerate(large)}, cell_size=cell)
        hits = nearest_groups([geometry[p].points for p in small], grid, r_max)
        for path, found in zip(small, hits):
            if found:
                target = min(found.items(), key=lambda kv: (kv[1], kv[0]))[0]
                members[large[target]].append(path)
            else:
                promoted.append(path)
    else:
        promoted = list(small)

    for path in promoted:
        members[path] = [path]
    promoted_set = set(promoted)
    groups = [
        _make_group(i, rep, members[rep], geometry, rep in promoted_set)
        for i, rep in enumerate(sorted(members))
    ]
    logger.info(
        "grouping: %d small, %d large, %d promoted -> %d groups",
        len(small),
        len(large),
        len(promoted),
        len(groups),
    )
    return groups


def grouping_report(groups: list[MeshGroup]) -> dict:
    sizes = Counter(len(g.member_paths) for g in groups)
    return {
        "group_count": len(groups),
        "mesh_count": sum(len(g.member_paths) for g in groups),
        "promoted_count": sum(g.promoted for g in groups),
        "merge_histogram": {str(k): sizes[k] for k in sorted(sizes)},
        "groups": [g.to_dict() for g in groups],
    }


def groups_from_report(report: dict, scene: Scene, pitch: float = DEFAULT_PITCH,
                       fill_interior: bool = False) -> list[MeshGroup]:
    """Rebuild groups (with their point sets) from a serialized report."""
    geometry = mesh_geometry(scene, pitch, fill_interior)
    out = []
    for entry in report["groups"]:
        out.append(
            _make_group(
                int(entry["id"]),
                entry["representative_path"],
                entry["member_paths"],
                geometry,
                bool(entry.get("promoted", False)),
            )
        )
    return sorted(out, key=lambda g: g.id)
