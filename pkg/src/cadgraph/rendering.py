"""Deterministic software z-buffer rasterizer for labeling snapshots.

Flat shading only: each face gets ``ambient + diffuse * |n . light|``.
Triangles crossing the near plane are clipped in camera space.
"""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import NothingVisible

RESOLUTION = (512, 512)
BACKGROUND = np.array([128, 128, 128], dtype=np.float64)
BASE_COLOR = np.array([205, 200, 190], dtype=np.float64)
HIGHLIGHT_COLOR = np.array([225, 45, 45], dtype=np.float64)
LIGHT_DIR = np.array([0.3, -0.5, 0.8]) / np.linalg.norm([0.3, -0.5, 0.8])
AMBIENT = 0.3
NEAR = 1e-3


@dataclass(frozen=True)
class CameraView:
    eye: tuple[float, float, float]
    target: tuple[float, float, float]
    up: tuple[float, float, float] = (0.0, 0.0, 1.0)
    vertical_fov: float = math.radians(45.0)
    resolution: tuple[int, int] = RESOLUTION

    def __post_init__(self):
        eye = np.asarray(self.eye, dtype=float)
        target = np.asarray(self.target, dtype=float)
        forward = target - eye
        if np.linalg.norm(forward) == 0:
            raise ValueError("camera eye and target coincide")
        cross = np.cross(forward / np.linalg.norm(forward), np.asarray(self.up, dtype=float))
        if np.linalg.norm(cross) < 1e-9:
            raise ValueError("camera up vector is parallel to the view direction")
        if not 0 < self.vertical_fov < math.pi:
            raise ValueError("vertical_fov must be in (0, pi)")

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        eye = np.asarray(self.eye, dtype=float)
        f = np.asarray(self.target, dtype=float) - eye
        f /= np.linalg.norm(f)
        r = np.cross(f, np.asarray(self.up, dtype=float))
        r /= np.linalg.norm(r)
        u = np.cross(r, f)
        return r, u, f

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        r, u, f = self.basis()
        rel = np.asarray(points, dtype=float) - np.asarray(self.eye, dtype=float)
        return np.stack([rel @ r, rel @ u, rel @ f], axis=-1)

    def project(self, cam: np.ndarray) -> np.ndarray:
        """Camera-space points (z > 0) to pixel coordinates (x right, y down)."""
        w, h = self.resolution
        focal = (h / 2.0) / math.tan(self.vertical_fov / 2.0)
        x = w / 2.0 + focal * cam[..., 0] / cam[..., 2]
        y = h / 2.0 - focal * cam[..., 1] / cam[..., 2]
        return np.stack([x, y], axis=-1)


def default_views(
    node,
    elevation_deg: float = 30.0,
    azimuths_deg: Sequence[float] = (0.0, 120.0, 240.0),
    distance_factor: float = 2.0,
    min_distance: float = 0.5,
    vertical_fov: float = math.radians(45.0),
) -> list[CameraView]:
    """Three cameras orbiting the node's bounding-box centre.

    ``node`` is anything with ``aabb`` and ``centroid`` (a scene-graph node or
    a mesh group). The cameras look at the centroid.
    """
    box = node.aabb
    center = box.center
    dist = max(distance_factor * box.diagonal, min_distance)
    el = math.radians(elevation_deg)
    target = tuple(float(c) for c in node.centroid)
    views = []
    for az_deg in azimuths_deg:
        az = math.radians(az_deg)
        direction = np.array([math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)])
        eye = tuple(float(c) for c in center + dist * direction)
        views.append(CameraView(eye, target, (0.0, 0.0, 1.0), vertical_fov))
    return views


def _clip_near(tri: np.ndarray) -> list[np.ndarray]:
    """Clip one camera-space triangle against z = NEAR; returns triangles."""
    inside = tri[:, 2] >= NEAR
    if inside.all():
        return [tri]
    if not inside.any():
        return []
    poly = []
    for i in range(3):
        a, b = tri[i], tri[(i + 1) % 3]
        a_in, b_in = a[2] >= NEAR, b[2] >= NEAR
        if a_in:
            poly.append(a)
        if a_in != b_in:
            t = (NEAR - a[2]) / (b[2] - a[2])
            poly.append(a + t * (b - a))
    return [np.array([poly[0], poly[i], poly[i + 1]]) for i in range(1, len(poly) - 1)]


@dataclass
class RenderBuffers:
    color: np.ndarray  # (H, W, 3) uint8
    owner: np.ndarray  # (H, W) int, -1 for background
    inv_depth: np.ndarray  # (H, W) float, 0 for background


def rasterize(
    triangles: np.ndarray,
    owners: np.ndarray,
    colors: np.ndarray,
    view: CameraView,
) -> RenderBuffers:
    """Z-buffer ``triangles`` (T, 3, 3 world coordinates) into a frame.

    ``owners`` tags each triangle (any non-negative int); ``colors`` is a
    (T, 3) base RGB per triangle before shading.
    """
    w, h = view.resolution
    inv_depth = np.zeros((h, w))
    owner = np.full((h, w), -1, dtype=np.int64)
    shade_rgb = np.zeros((h, w, 3))
    triangles = np.asarray(triangles, dtype=float).reshape(-1, 3, 3)
    if len(triangles):
        normals = np.cross(triangles[:, 1] - triangles[:, 0], triangles[:, 2] - triangles[:, 0])
        lengths = np.linalg.norm(normals, axis=1)
        ok = lengths > 0
        normals[ok] /= lengths[ok, None]
        intensity = AMBIENT + (1.0 - AMBIENT) * np.abs(normals @ LIGHT_DIR)
        cam_all = view.to_camera(triangles.reshape(-1, 3)).reshape(-1, 3, 3)
    for t in range(len(triangles)):
        if not ok[t]:
            continue
        rgb = np.asarray(colors[t], dtype=float) * intensity[t]
        for cam in _clip_near(cam_all[t]):
            _fill(cam, view, rgb, int(owners[t]), inv_depth, owner, shade_rgb)
    color = np.where(owner[..., None] >= 0, shade_rgb, BACKGROUND)
    return RenderBuffers(np.rint(color).astype(np.uint8), owner, inv_depth)


def _fill(cam, view, rgb, tag, inv_depth, owner, shade_rgb):
    w, h = view.resolution
    pix = view.project(cam)
    x0 = max(int(math.floor(pix[:, 0].min())), 0)
    x1 = min(int(math.ceil(pix[:, 0].max())), w - 1)
    y0 = max(int(math.floor(pix[:, 1].min())), 0)
    y1 = min(int(math.ceil(pix[:, 1].max())), h - 1)
    if x0 > x1 or y0 > y1:
        return
    (ax, ay), (bx, by), (cx, cy) = pix
    area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    if area == 0:
        return
    ys, xs = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
    px = xs + 0.5
    py = ys + 0.5
    w0 = ((bx - px) * (cy - py) - (by - py) * (cx - px)) / area
    w1 = ((cx - px) * (ay - py) - (cy - py) * (ax - px)) / area
    w2 = 1.0 - w0 - w1
    inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
    if not inside.any():
        return
    inv_z = w0 / cam[0, 2] + w1 / cam[1, 2] + w2 / cam[2, 2]
    region = inv_depth[y0 : y1 + 1, x0 : x1 + 1]
    nearer = inside & (inv_z > region)
    region[nearer] = inv_z[nearer]
    owner[y0 : y1 + 1, x0 : x1 + 1][nearer] = tag
    shade_rgb[y0 : y1 + 1, x0 : x1 + 1][nearer] = rgb


def _scene_triangles(scene, visible: Iterable[str], highlight: Iterable[str]):
    highlight = set(highlight)
    tris, owners, colors, paths = [], [], [], []
    for mesh in scene.meshes:
        if mesh.path not in visible or len(mesh.faces) == 0:
            continue
        k = len(paths)
        paths.append(mesh.path)
        tris.append(mesh.vertices[mesh.faces])
        owners.append(np.full(len(mesh.faces), k))
        color = HIGHLIGHT_COLOR if mesh.path in highlight else BASE_COLOR
        colors.append(np.tile(color, (len(mesh.faces), 1)))
    if not tris:
        return np.zeros((0, 3, 3)), np.zeros(0, dtype=int), np.zeros((0, 3)), paths
    return np.concatenate(tris), np.concatenate(owners), np.concatenate(colors), paths


def render_buffers(scene, visible, highlight=None, view: CameraView | None = None):
    visible = set(visible)
    if not visible:
        raise ValueError("nothing to render: visible set is empty")
    if isinstance(highlight, str):
        highlight = [highlight]
    tris, owners, colors, paths = _scene_triangles(scene, visible, highlight or ())
    buffers = rasterize(tris, owners, colors, view)
    if (buffers.owner < 0).all():
        warnings.warn("no visible geometry inside the view frustum", NothingVisible, stacklevel=3)
    return buffers, paths


def render(scene, visible, highlight=None, view: CameraView | None = None) -> np.ndarray:
    """Render the meshes named in ``visible``; ``highlight`` meshes are red."""
    if view is None:
        raise ValueError("a CameraView is required")
    buffers, _ = render_buffers(scene, visible, highlight, view)
    return buffers.color


def to_png(image: np.ndarray) -> bytes:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(image, dtype=np.uint8), "RGB").save(
        buf, format="PNG", compress_level=6
    )
    return buf.getvalue()


def save_png(image: np.ndarray, path) -> None:
    with open(path, "wb") as fh:
        fh.write(to_png(image))


def label_images(scene, node, views: Sequence[CameraView] | None = None) -> list[np.ndarray]:
    """Context/isolated image pairs for one mesh node, in view order.

    Context images show every non-excluded mesh with the node highlighted;
    isolated images show only the node's member meshes.
    """
    views = list(views) if views is not None else default_views(node)
    members = list(node.member_paths) or [node.path]
    everything = [m.path for m in scene.meshes if not m.excluded]
    images = []
    for view in views:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NothingVisible)
            images.append(render(scene, everything, members, view))
            images.append(render(scene, members, members, view))
    return images
