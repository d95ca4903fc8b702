"""Acceptance criteria, one test each.

Every test records a single PASS or FAIL line in ``RESULTS``; conftest prints
them in the terminal summary so they appear in the plain ``pytest -v`` log.
"""

import json
import math
import os
import random
import time
import warnings
from contextlib import contextmanager

import numpy as np
import pytest

from cadgraph import functional, pipeline, scene_graph, synth
from cadgraph.clustering import dbscan
from cadgraph.errors import NothingVisible
from cadgraph.evaluation import accuracy_counts, evaluate, label_accuracy
from cadgraph.geometry import PointSet, voxelize_points
from cadgraph.grouping import group_small_meshes
from cadgraph.labeling import Provenance, SemanticLabel
from cadgraph.pipeline import LabelerConfig, PipelineConfig, singleton_noise
from cadgraph.rendering import BACKGROUND, CameraView, default_views, label_images, rasterize, render_buffers, to_png
from cadgraph.scene_graph import build_scene_graph
from cadgraph.spatial_index import ABOVE_CUTOFF, SparseDistanceMap, adjacency_pairs, build_grid, min_distance, pairwise_min_distances

import table_fixture
from conftest import synth_case
from graphs import random_functional_graph, random_scene_graph
from oracles import bfs_components, brute_min_distance, brute_voxels, pixel_ray, random_blob, random_sparse_map, ray_owner

RESULTS: dict[int, str] = {}
PITCH = 0.01
ALL_CASES = sorted({**synth.suite(), **synth.adversarial_suite()})
GOLDEN = ["linear_chain", "gauges_adjacent_segments", "tank_star", "disconnected_systems",
          "valve_gauge_direct", "contested_corridor"]


@contextmanager
def criterion(number: int, title: str):
    details: list[str] = []
    try:
        yield details
    except BaseException as exc:
        RESULTS[number] = f"[{number:2d}] FAIL {title}: {type(exc).__name__} {exc}".splitlines()[0]
        print(RESULTS[number])
        raise
    extra = f" ({'; '.join(details)})" if details else ""
    RESULTS[number] = f"[{number:2d}] PASS {title}{extra}"
    print(RESULTS[number])


def library_functional(scene, labels):
    """Group, cluster, build the scene graph and run the extraction in memory."""
    groups = group_small_meshes(scene)
    grid = build_grid(groups, cell_size=0.05)
    dmap = pairwise_min_distances(groups, grid, cutoff=0.05)
    clustering = singleton_noise(dbscan(len(groups), dmap, 0.01, 1))
    graph = build_scene_graph(groups, clustering, adjacency_pairs(dmap, 0.01), labels)
    return graph, clustering, functional.extract_functional_relations(graph)


def test_criterion_01_dbscan_equals_components():
    with criterion(1, "DBSCAN(min_samples=1) equals union-find components on 100 maps") as notes:
        rng = random.Random(20261019)
        elapsed = 0.0
        for _ in range(100):
            n = rng.randint(1, 300)
            entries = random_sparse_map(rng, n, density=rng.choice([0.002, 0.01, 0.03]))
            dmap = SparseDistanceMap(0.05, entries)
            start = time.perf_counter()
            got = dbscan(n, dmap, 0.01, 1).partition()
            elapsed += time.perf_counter() - start
            assert got == bfs_components(n, [p for p, d in entries.items() if d <= 0.01])
        assert elapsed < 5.0
        notes.append(f"{elapsed:.2f} s")


def test_criterion_02_grid_distances_are_exact():
    with criterion(2, "grid min_distance equals brute force within 1e-9 on 50 pairs") as notes:
        rng = np.random.default_rng(7)
        elapsed = 0.0
        for _ in range(50):
            total = int(rng.integers(50, 5001))
            na = int(rng.integers(1, total))
            a = random_blob(rng, na, rng.integers(-30, 30, size=3))
            b = random_blob(rng, total - na, rng.integers(-30, 30, size=3))
            sets = {0: PointSet(a, PITCH), 1: PointSet(b, PITCH)}
            cutoff = float(rng.choice([0.05, 0.1, 0.3]))
            start = time.perf_counter()
            grid = build_grid(sets, cell_size=math.ceil(cutoff / PITCH - 1e-9) * PITCH)
            got = min_distance(0, 1, grid, cutoff)
            dmap = pairwise_min_distances(sets, grid, cutoff)
            elapsed += time.perf_counter() - start
            truth = brute_min_distance(sets[0].points, sets[1].points)
            if truth <= cutoff + 1e-12:
                assert abs(got - truth) <= 1e-9
                assert set(dmap.entries) == {(0, 1)}
                assert abs(dmap.entries[(0, 1)] - truth) <= 1e-9
            else:
                assert got == ABOVE_CUTOFF and dmap.entries == {}
        assert elapsed < 30.0
        notes.append(f"{elapsed:.2f} s")


def test_criterion_03_grouping_partition():
    with criterion(3, "grouping partitions active meshes, bolts collapse, counts monotone in v_thresh") as notes:
        for name in ALL_CASES:
            scene = synth_case(name).scene
            active = sorted(m.path for m in scene.meshes if m.active and not m.is_ground)
            counts = []
            for v in (1e-7, 1e-6, 1e-5):
                groups = group_small_meshes(scene, v_thresh=v)
                members = [p for g in groups for p in g.member_paths]
                assert sorted(members) == active and len(set(members)) == len(members)
                counts.append(len(groups))
            assert counts == sorted(counts, reverse=True), (name, counts)
        bolt_groups = group_small_meshes(synth_case("bolt_cluster").scene)
        assert len(bolt_groups) <= 12
        notes.append(f"{len(ALL_CASES)} cases, bolt case {len(bolt_groups)} groups")


def test_criterion_04_golden_suite():
    with criterion(4, "functional graphs equal ground truth on the golden suite") as notes:
        worst = 0
        for name in GOLDEN:
            case = synth_case(name)
            graph, _, fg = library_functional(case.scene, case.gt_labels)
            assert fg.signature() == case.gt_functional.signature(), name
            assert fg.outer_iterations <= len(graph.mesh_nodes())
            worst = max(worst, fg.outer_iterations)
        notes.append(f"{len(GOLDEN)} cases, max outer iterations {worst}")


def test_criterion_05_table_fixture():
    with criterion(5, "metric fixture reproduces 79.9% / 38.5% and unit detection counts"):
        pred, gt, units = table_fixture.build()
        assert accuracy_counts(pred, gt) == (67, 139, 174)
        report = evaluate(pred, gt, units).to_dict()
        assert report["group_accuracy_display"] == "79.9%"
        assert report["name_accuracy_display"] == "38.5%"
        assert report["unit_detection"]["Valve assembly"] == {"fully": 5, "partially": 7, "missed": 0}
        assert report["unit_detection"]["Gauge"] == {"fully": 12, "partially": 0, "missed": 0}


def test_criterion_06_round_trips():
    with criterion(6, "scene and functional graphs round-trip on 20 random graphs, DOT stable"):
        rng = random.Random(6)
        for _ in range(20):
            g = random_scene_graph(rng)
            again = scene_graph.deserialize(scene_graph.serialize(g))
            assert again == g
            assert scene_graph.export_dot(again) == scene_graph.export_dot(g) == scene_graph.export_dot(g)
            fg = random_functional_graph(rng)
            back = functional.deserialize(functional.serialize(fg))
            assert back == fg and back.outer_iterations == fg.outer_iterations
            assert functional.export_dot(back) == functional.export_dot(fg)


def test_criterion_07_rasterizer():
    with criterion(7, "occlusion oracle, isolated-image ownership and byte-stable PNGs") as notes:
        near = np.array([[-1.0, -1.0, 0.0], [1.0, -0.8, 0.2], [0.0, 1.0, -0.1]])
        far = np.array([[-0.6, 1.2, -1.0], [0.9, 0.9, -0.5], [0.2, -1.2, -0.8]])
        tris = np.stack([near, far])
        view = CameraView((0.2, -0.3, 4.0), (0, 0, -0.3), (0, 1, 0), math.radians(50), (64, 48))
        buf = rasterize(tris, np.array([0, 1]), np.array([[200, 0, 0], [0, 200, 0]]), view)
        overlap = 0
        for py in range(48):
            for px in range(64):
                o, d = pixel_ray(view, px, py)
                hits = [ray_owner(tris[[k]], o, d) for k in (0, 1)]
                if any(amb for _, amb in hits) or not all(h is not None for h, _ in hits):
                    continue
                overlap += 1
                owner, ambiguous = ray_owner(tris, o, d)
                assert not ambiguous and buf.owner[py, px] == owner
        assert overlap > 20

        scene = synth_case("valve_gauge_direct").scene
        groups = group_small_meshes(scene)[:5]
        everything = [m.path for m in scene.meshes if m.active]
        for g in groups:
            members = set(g.member_paths)
            views = [CameraView(v.eye, v.target, v.up, v.vertical_fov, (96, 96)) for v in default_views(g)]
            for v in views:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", NothingVisible)
                    iso, paths = render_buffers(scene, members, members, v)
                owned = iso.owner >= 0
                assert {paths[k] for k in np.unique(iso.owner[owned])} <= members
                assert ((iso.color != BACKGROUND.astype(np.uint8)).any(axis=2) == owned).all()
            first = [to_png(img) for img in label_images(scene, g, views)]
            assert first == [to_png(img) for img in label_images(scene, g, views)]
        notes.append(f"{overlap} overlapping pixels")


def _case_clusters(out):
    doc = json.loads((out / pipeline.CLUSTERS).read_text())
    clusters = {frozenset(ps) for ps in doc["clusters"].values()}
    graph = scene_graph.deserialize((out / pipeline.GRAPH).read_bytes())
    for gid in doc["noise"]:
        clusters.add(frozenset(graph.nodes[gid].member_paths))
    return frozenset(clusters)


def test_criterion_08_pipeline_closure(tmp_path):
    with criterion(8, "run-all reproduces ground-truth clusters and functional graphs") as notes:
        start = time.perf_counter()
        for name in ALL_CASES:
            case_dir = synth_case(name).write(tmp_path / name)
            cfg = PipelineConfig(
                input=str(case_dir / "scene.json"),
                gt_labels=str(case_dir / "gt_labels.json"),
                gt_units=str(case_dir / "gt_units.json"),
                labeler=LabelerConfig(kind="file", labels=str(case_dir / "gt_labels.json")),
                out_dir=str(tmp_path / name / "out"),
            )
            out = pipeline.run_all(cfg)
            case = synth_case(name)
            assert _case_clusters(out) == case.gt_clusters, name
            fg = functional.deserialize((out / pipeline.FUNCTIONAL).read_bytes())
            assert fg.signature() == case.gt_functional.signature(), name
        elapsed = time.perf_counter() - start
        assert elapsed < 120.0
        notes.append(f"{len(ALL_CASES)} cases in {elapsed:.1f} s")


def test_criterion_09_invariants():
    with criterion(9, "voxelization idempotent, name_acc <= group_acc, translation invariance"):
        rng = np.random.default_rng(9)
        for _ in range(1000):
            pts = rng.uniform(-50, 50, size=(int(rng.integers(1, 40)), 3))
            once = voxelize_points(pts, PITCH)
            assert once.index_set() == brute_voxels(pts, PITCH)
            assert voxelize_points(once.points, PITCH) == once

        prng = random.Random(9)
        for _ in range(100):
            paths = [f"/m{i}" for i in range(prng.randint(1, 60))]
            pick = lambda: SemanticLabel(prng.choice("ABC"), prng.choice("xyz"), Provenance.MODEL)
            pred = {p: pick() for p in paths if prng.random() < 0.9}
            gt = {p: pick() for p in paths}
            name_acc, group_acc = label_accuracy(pred, gt)
            assert name_acc <= group_acc

        offset = (17.3, -4.2, 9.9)
        for name in GOLDEN:
            case = synth_case(name)
            _, _, base = library_functional(case.scene, case.gt_labels)
            _, _, moved = library_functional(case.scene.translated(offset), case.gt_labels)
            assert moved.signature() == base.signature() == case.gt_functional.signature(), name


ASSET = os.environ.get("CADGRAPH_PLANT_ASSET")


@pytest.mark.skipif(not ASSET, reason="published plant asset unavailable")
def test_criterion_10_asset_smoke(tmp_path):
    with criterion(10, "asset smoke: 8327 meshes, 2068 groups, 39 clusters"):
        cfg = PipelineConfig.load(ASSET).replace(out_dir=str(tmp_path), labeler={"kind": "none"})
        out = pipeline.run_all(cfg)
        manifest = json.loads((out / pipeline.MANIFEST).read_text())
        assert manifest["stages"]["ingest"]["meshes"] == 8327
        assert manifest["stages"]["group"]["groups"] == 2068
        assert manifest["stages"]["cluster"]["clusters"] == 39


if not ASSET:
    RESULTS[10] = "[10] SKIP asset smoke: published plant asset unavailable (set CADGRAPH_PLANT_ASSET)"
