import numpy as np
import pytest

from cadgraph.geometry import aabb, volume_proxy
from cadgraph.grouping import classify_meshes, group_small_meshes, grouping_report, groups_from_report
from cadgraph.scene_io import Mesh, Scene
from cadgraph.synth import box_mesh

from conftest import synth_case


def box(path, lo, hi, **kw):
    v, f = box_mesh(lo, hi, dense=False)
    return Mesh(path, v, f, **kw)


def cube(path, centre, size, **kw):
    c = np.asarray(centre, dtype=float)
    return box(path, c - size / 2, c + size / 2, **kw)


def test_small_mesh_joins_nearest_large_mesh():
    scene = Scene(
        (
            box("/left", (0, 0, 0), (0.2, 0.2, 0.2)),
            box("/right", (0.5, 0, 0), (0.7, 0.2, 0.2)),
            cube("/bolt", (0.23, 0.1, 0.1), 0.006),
            cube("/far", (2.0, 2.0, 2.0), 0.006),
        )
    )
    groups = group_small_meshes(scene)
    assert [g.representative_path for g in groups] == ["/far", "/left", "/right"]
    assert [g.id for g in groups] == [0, 1, 2]
    assert groups[1].member_paths == ("/bolt", "/left")
    assert groups[0].promoted and not groups[1].promoted


def test_ties_go_to_the_smaller_path():
    scene = Scene(
        (
            box("/b", (0, 0, 0), (0.2, 0.2, 0.2)),
            box("/a", (0.3, 0, 0), (0.5, 0.2, 0.2)),
            cube("/s", (0.255, 0.105, 0.105), 0.006),
        )
    )
    groups = {g.representative_path: g for g in group_small_meshes(scene)}
    assert "/s" in groups["/a"].member_paths


def test_threshold_is_inclusive_for_small():
    scene = Scene((box("/x", (0, 0, 0), (0.01, 0.01, 0.01)), box("/y", (0, 0, 0.5), (1, 1, 1))))
    at = volume_proxy(aabb(scene.get("/x")))
    small, large = classify_meshes(scene, v_thresh=at)
    assert small == ["/x"] and large == ["/y"]


def test_excluded_and_ground_are_not_grouped():
    scene = Scene(
        (
            box("/g", (-5, -5, -0.01), (5, 5, 0), is_ground=True),
            box("/junk", (0, 0, 0), (1, 1, 1), excluded=True),
            box("/p", (0, 0, 2), (1, 1, 3)),
        )
    )
    assert [g.representative_path for g in group_small_meshes(scene)] == ["/p"]


def test_bolt_case_collapses_to_large_parts(bolt_case):
    groups = group_small_meshes(bolt_case.scene)
    assert len(groups) <= 12
    bolts = [p for p in bolt_case.scene.paths if "/bolt_" in p]
    assert len(bolts) == 50
    holder = [g for g in groups if "/bolt_" in " ".join(g.member_paths)]
    assert len(holder) == 1 and holder[0].representative_path.endswith("/a")


@pytest.mark.parametrize("name", ["linear_chain", "tank_star", "bolt_cluster", "split_pipe"])
def test_groups_partition_active_meshes(name):
    scene = synth_case(name).scene
    groups = group_small_meshes(scene)
    members = [p for g in groups for p in g.member_paths]
    active = [m.path for m in scene.meshes if m.active and not m.is_ground]
    assert sorted(members) == sorted(active)
    assert len(members) == len(set(members))


def test_report_round_trip(bolt_case):
    groups = group_small_meshes(bolt_case.scene)
    report = grouping_report(groups)
    assert report["group_count"] == len(groups)
    assert report["merge_histogram"]["51"] == 1
    assert groups_from_report(report, bolt_case.scene) == groups
