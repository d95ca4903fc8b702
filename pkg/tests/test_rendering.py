import math
import warnings

import numpy as np
import pytest

from cadgraph.errors import NothingVisible
from cadgraph.geometry import Box3
from cadgraph.grouping import group_small_meshes
from cadgraph.rendering import (
    BACKGROUND,
    CameraView,
    default_views,
    label_images,
    rasterize,
    render_buffers,
    to_png,
)
from cadgraph.scene_io import Mesh, Scene

from oracles import pixel_ray, ray_owner

SMALL = (64, 48)


def two_triangles():
    near = np.array([[-1.0, -1.0, 0.0], [1.0, -0.8, 0.2], [0.0, 1.0, -0.1]])
    far = np.array([[-0.6, 1.2, -1.0], [0.9, 0.9, -0.5], [0.2, -1.2, -0.8]])
    return np.stack([near, far])


@pytest.mark.parametrize("eye", [(0.2, -0.3, 4.0), (1.2, 0.6, 3.5), (-3.0, 0.5, 2.0)])
def test_occlusion_matches_ray_casting(eye):
    tris = two_triangles()
    view = CameraView(eye, (0, 0, -0.3), (0, 1, 0), math.radians(50), SMALL)
    buf = rasterize(tris, np.array([0, 1]), np.array([[200, 0, 0], [0, 200, 0]]), view)
    overlap = checked = 0
    for py in range(SMALL[1]):
        for px in range(SMALL[0]):
            o, d = pixel_ray(view, px, py)
            owner, ambiguous = ray_owner(tris, o, d)
            if ambiguous:
                continue
            checked += 1
            expected = -1 if owner is None else owner
            assert buf.owner[py, px] == expected, (px, py)
            both = all(ray_owner(tris[[k]], o, d)[0] is not None for k in (0, 1))
            overlap += both
    assert checked > 0.9 * SMALL[0] * SMALL[1]
    assert overlap > 20


def test_near_plane_clipping_keeps_visible_part():
    # a floor triangle passing under and behind the camera
    tri = np.array([[[-5.0, -5.0, 0.0], [5.0, -5.0, 0.0], [0.0, 20.0, 0.0]]])
    view = CameraView((0, 0, 1), (0, 5, 0), (0, 0, 1), math.radians(60), SMALL)
    buf = rasterize(tri, np.array([0]), np.array([[100, 100, 100]]), view)
    assert (buf.owner == 0).sum() > 0
    assert (buf.owner[: SMALL[1] // 3] == -1).all()


def test_nothing_visible_warns():
    scene = Scene((Mesh("/t", np.eye(3), [[0, 1, 2]]),))
    view = CameraView((0, 0, 10), (0, 0, 20), (0, 1, 0), resolution=SMALL)
    with pytest.warns(NothingVisible):
        buf, _ = render_buffers(scene, ["/t"], None, view)
    assert (buf.color == BACKGROUND.astype(np.uint8)).all()


def test_default_views_geometry():
    class N:
        aabb = Box3((0, 0, 0), (1, 1, 1))
        centroid = (0.5, 0.5, 0.5)

    views = default_views(N())
    assert len(views) == 3
    for v, az in zip(views, (0, 120, 240)):
        rel = np.array(v.eye) - 0.5
        assert np.linalg.norm(rel) == pytest.approx(2 * math.sqrt(3))
        assert math.degrees(math.asin(rel[2] / np.linalg.norm(rel))) == pytest.approx(30)
        assert math.degrees(math.atan2(rel[1], rel[0])) % 360 == pytest.approx(az % 360, abs=1e-9)


@pytest.fixture(scope="module")
def nodes(linear_case):
    groups = group_small_meshes(linear_case.scene)
    return linear_case.scene, groups[:5]


def _small_views(node):
    return [
        CameraView(v.eye, v.target, v.up, v.vertical_fov, (96, 96)) for v in default_views(node)
    ]


def test_isolated_images_only_show_the_node(nodes):
    scene, groups = nodes
    everything = [m.path for m in scene.meshes if not m.excluded]
    for g in groups:
        members = set(g.member_paths)
        for view in _small_views(g):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", NothingVisible)
                iso, iso_paths = render_buffers(scene, members, members, view)
                ctx, ctx_paths = render_buffers(scene, everything, members, view)
            owned = iso.owner >= 0
            assert {iso_paths[k] for k in np.unique(iso.owner[owned])} <= members
            assert ((iso.color != BACKGROUND.astype(np.uint8)).any(axis=2) == owned).all()
            shown = np.isin(ctx.owner, [i for i, p in enumerate(ctx_paths) if p in members])
            # occluders can only hide the node, never reveal more of it
            assert not (shown & ~owned).any()
            red = ctx.color[..., 0].astype(int) - ctx.color[..., 1]
            assert (red[shown] > 60).all()
            assert (red[(ctx.owner >= 0) & ~shown] < 60).all()


def test_png_bytes_are_reproducible(nodes):
    scene, groups = nodes
    views = _small_views(groups[0])
    first = [to_png(img) for img in label_images(scene, groups[0], views)]
    second = [to_png(img) for img in label_images(scene, groups[0], views)]
    assert len(first) == 6
    assert first == second
    assert first[0].startswith(b"\x89PNG")
