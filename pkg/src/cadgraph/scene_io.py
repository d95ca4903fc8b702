"""Scene ingestion: OBJ, glTF/GLB and the native JSON scene format.

Every importer produces a :class:`Scene` whose meshes are sorted by their
hierarchical identity path and whose coordinates are in meters.
"""

from __future__ import annotations

import base64
import dataclasses
import fnmatch
import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import MalformedGeometry, UnitMismatch, UnreadableFile

logger = logging.getLogger(__name__)

UNIT_SCALE = {
    "m": 1.0,
    "meter": 1.0,
    "meters": 1.0,
    "cm": 0.01,
    "centimeter": 0.01,
    "centimeters": 0.01,
    "mm": 0.001,
    "millimeter": 0.001,
    "millimeters": 0.001,
    "km": 1000.0,
    "in": 0.0254,
    "inch": 0.0254,
    "inches": 0.0254,
    "ft": 0.3048,
    "foot": 0.3048,
    "feet": 0.3048,
}

FORMATS = ("obj", "gltf", "json")


def unit_scale(units: str) -> float:
    try:
        return UNIT_SCALE[str(units).strip().lower()]
    except KeyError:
        raise UnitMismatch(f"units {units!r} are not convertible to meters") from None


@dataclass(frozen=True, eq=False)
class Mesh:
    """A triangle mesh with a hierarchical identity path.

    ``vertices`` is an (N, 3) float64 array in meters and ``faces`` an (M, 3)
    int64 array of vertex indices. Both arrays are read-only.
    """

    path: str
    vertices: np.ndarray
    faces: np.ndarray
    excluded: bool = False
    is_ground: bool = False

    def __post_init__(self):
        vertices = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        faces = np.array(self.faces, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(vertices)):
            raise MalformedGeometry(f"{self.path}: non-finite vertex coordinates")
        if faces.size and (faces.min() < 0 or faces.max() >= len(vertices)):
            raise MalformedGeometry(f"{self.path}: face references a missing vertex")
        vertices.setflags(write=False)
        faces.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "faces", faces)

    @property
    def active(self) -> bool:
        return not self.excluded

    def __eq__(self, other):
        if not isinstance(other, Mesh):
            return NotImplemented
        return (
            self.path == other.path
            and self.excluded == other.excluded
            and self.is_ground == other.is_ground
            and np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.faces, other.faces)
        )

    def __hash__(self):
        return hash(self.path)

    def translated(self, offset: Sequence[float]) -> "Mesh":
        return dataclasses.replace(self, vertices=self.vertices + np.asarray(offset, dtype=float))


@dataclass(frozen=True)
class Scene:
    meshes: tuple[Mesh, ...] = ()
    units: str = "m"

    def __post_init__(self):
        meshes = tuple(sorted(self.meshes, key=lambda m: m.path))
        paths = [m.path for m in meshes]
        for a, b in zip(paths, paths[1:]):
            if a == b:
                raise MalformedGeometry(f"duplicate mesh path {a!r}")
        if self.units != "m":
            raise UnitMismatch("a Scene is always stored in meters")
        object.__setattr__(self, "meshes", meshes)

    def __len__(self) -> int:
        return len(self.meshes)

    def __iter__(self):
        return iter(self.meshes)

    @property
    def paths(self) -> list[str]:
        return [m.path for m in self.meshes]

    def get(self, path: str) -> Mesh:
        for mesh in self.meshes:
            if mesh.path == path:
                return mesh
        raise KeyError(path)

    def by_path(self) -> dict[str, Mesh]:
        return {m.path: m for m in self.meshes}

    def translated(self, offset: Sequence[float]) -> "Scene":
        return Scene(tuple(m.translated(offset) for m in self.meshes))


@dataclass(frozen=True)
class SceneStats:
    mesh_count: int
    active_count: int
    excluded_count: int
    ground_count: int
    vertex_count: int
    face_count: int
    bounds_min: tuple[float, float, float]
    bounds_max: tuple[float, float, float]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def fan_triangulate(polygon: Sequence[int]) -> list[tuple[int, int, int]]:
    """Split a polygon (i, j, k, l, ...) into the fan (i, j, k), (i, k, l), ..."""
    if len(polygon) < 3:
        raise MalformedGeometry(f"face with {len(polygon)} vertices")
    first = polygon[0]
    return [(first, polygon[i], polygon[i + 1]) for i in range(1, len(polygon) - 1)]


def _faces_array(polygons: Iterable[Sequence[int]]) -> np.ndarray:
    tris = []
    for poly in polygons:
        tris.extend(fan_triangulate(list(poly)))
    return np.array(tris, dtype=np.int64).reshape(-1, 3)


# --------------------------------------------------------------------------
# loading


def load_scene(source, format: str | None = None, units: str | None = None) -> Scene:
    """Load a scene file.

    Args:
        source: path to an ``.obj``, ``.gltf``/``.glb`` or ``.json`` file.
        format: one of ``obj``, ``gltf``, ``json``; inferred from the suffix
            when omitted.
        units: length unit of an OBJ file. When omitted, a sidecar
            ``<file>.units.json`` (``{"units": "mm"}``) is consulted, then
            meters are assumed. JSON scenes declare their own units; glTF is
            always meters.
    """
    path = Path(source)
    if format is None:
        format = {".obj": "obj", ".gltf": "gltf", ".glb": "gltf", ".json": "json"}.get(
            path.suffix.lower()
        )
        if format is None:
            raise UnreadableFile(f"cannot infer scene format from {path.name!r}")
    format = format.lower()
    if format not in FORMATS:
        raise UnreadableFile(f"unknown scene format {format!r}")
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise UnreadableFile(f"{path}: {exc}") from exc

    if format == "json":
        try:
            doc = json.loads(data.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise UnreadableFile(f"{path}: not valid JSON ({exc})") from exc
        return scene_from_dict(doc)
    if format == "obj":
        if units is None:
            units = _sidecar_units(path)
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise UnreadableFile(f"{path}: not UTF-8 text") from exc
        return parse_obj(text, units=units)
    return parse_gltf(data, base_dir=path.parent)


def _sidecar_units(path: Path) -> str:
    sidecar = path.with_name(path.name + ".units.json")
    if not sidecar.exists():
        return "m"
    try:
        return json.loads(sidecar.read_text())["units"]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise UnreadableFile(f"{sidecar}: bad units sidecar ({exc})") from exc


def scene_from_dict(doc: dict) -> Scene:
    """Build a Scene from the native JSON document."""
    if not isinstance(doc, dict) or not isinstance(doc.get("meshes"), list):
        raise UnreadableFile("scene document needs a 'meshes' list")
    scale = unit_scale(doc.get("units", "m"))
    meshes = []
    for index, entry in enumerate(doc["meshes"]):
        if not isinstance(entry, dict):
            raise MalformedGeometry(f"mesh entry {index} is not an object")
        path = entry.get("path") or f"/unnamed/{index}"
        try:
            vertices = np.array(entry.get("vertices", []), dtype=np.float64).reshape(-1, 3)
        except (ValueError, TypeError) as exc:
            raise MalformedGeometry(f"{path}: bad vertex list ({exc})") from exc
        faces = _faces_array(entry.get("faces", []))
        meshes.append(
            Mesh(
                path=path,
                vertices=vertices * scale,
                faces=faces,
                excluded=bool(entry.get("excluded", False)),
                is_ground=bool(entry.get("is_ground", False)),
            )
        )
    return Scene(tuple(meshes))


def scene_to_dict(scene: Scene) -> dict:
    meshes = []
    for mesh in scene.meshes:
        entry = {
            "path": mesh.path,
            "vertices": mesh.vertices.tolist(),
            "faces": mesh.faces.tolist(),
        }
        if mesh.excluded:
            entry["excluded"] = True
        if mesh.is_ground:
            entry["is_ground"] = True
        meshes.append(entry)
    return {"units": "m", "meshes": meshes}


def dumps_scene(scene: Scene) -> str:
    return json.dumps(scene_to_dict(scene), separators=(",", ":"))


def save_scene(scene: Scene, path) -> None:
    Path(path).write_text(dumps_scene(scene))


def parse_obj(text: str, units: str = "m") -> Scene:
    """Parse Wavefront OBJ text. ``o``/``g`` names become mesh paths."""
    scale = unit_scale(units)
    vertices: list[tuple[float, float, float]] = []
    polys: dict[str, list[list[int]]] = {}
    order: list[str] = []
    obj_name: str | None = None
    grp_name: str | None = None
    unnamed = 0
    current: str | None = None

    def current_key() -> str:
        nonlocal current, unnamed
        if current is None:
            if obj_name and grp_name:
                current = f"/{obj_name}/{grp_name}"
            elif obj_name or grp_name:
                current = f"/{obj_name or grp_name}"
            else:
                current = f"/unnamed/{unnamed}"
                unnamed += 1
        return current

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, _, rest = line.partition(" ")
        rest = rest.strip()
        if tag == "v":
            parts = rest.split()
            if len(parts) < 3:
                raise MalformedGeometry(f"line {lineno}: vertex needs 3 coordinates")
            try:
                vertices.append((float(parts[0]), float(parts[1]), float(parts[2])))
            except ValueError as exc:
                raise MalformedGeometry(f"line {lineno}: {exc}") from exc
        elif tag == "f":
            idx = []
            for token in rest.split():
                try:
                    i = int(token.split("/", 1)[0])
                except ValueError as exc:
                    raise MalformedGeometry(f"line {lineno}: bad face index {token!r}") from exc
                i = i - 1 if i > 0 else len(vertices) + i
                if i < 0 or i >= len(vertices):
                    raise MalformedGeometry(f"line {lineno}: face references missing vertex")
                idx.append(i)
            if len(idx) < 3:
                raise MalformedGeometry(f"line {lineno}: face with {len(idx)} vertices")
            key = current_key()
            if key not in polys:
                polys[key] = []
                order.append(key)
            polys[key].append(idx)
        elif tag == "o":
            obj_name, grp_name, current = rest.replace(" ", "_") or None, None, None
        elif tag == "g":
            grp_name, current = rest.replace(" ", "_") or None, None

    all_vertices = np.array(vertices, dtype=np.float64).reshape(-1, 3) * scale
    meshes = []
    for key in order:
        faces = _faces_array(polys[key])
        used, local = np.unique(faces, return_inverse=True)
        meshes.append(Mesh(key, all_vertices[used], local.reshape(-1, 3)))
    return Scene(tuple(meshes))


# --------------------------------------------------------------------------
# glTF

_COMPONENT = {5120: "i1", 5121: "u1", 5122: "<i2", 5123: "<u2", 5125: "<u4", 5126: "<f4"}
_NCOMP = {"SCALAR": 1, "VEC2": 2, "VEC3": 3, "VEC4": 4, "MAT4": 16}


def _split_glb(data: bytes) -> tuple[dict, bytes | None]:
    magic, version, _length = struct.unpack_from("<4sII", data, 0)
    if magic != b"glTF" or version != 2:
        raise UnreadableFile("not a glTF 2.0 binary")
    offset, doc, binary = 12, None, None
    while offset + 8 <= len(data):
        chunk_len, chunk_type = struct.unpack_from("<II", data, offset)
        chunk = data[offset + 8 : offset + 8 + chunk_len]
        if chunk_type == 0x4E4F534A:
            doc = json.loads(chunk.decode("utf-8"))
        elif chunk_type == 0x004E4942:
            binary = bytes(chunk)
        offset += 8 + chunk_len
    if doc is None:
        raise UnreadableFile("GLB without JSON chunk")
    return doc, binary


def _load_buffers(doc: dict, base_dir: Path, glb_bin: bytes | None) -> list[bytes]:
    buffers = []
    for i, buf in enumerate(doc.get("buffers", [])):
        uri = buf.get("uri")
        if uri is None:
            if glb_bin is None:
                raise UnreadableFile(f"buffer {i} has no data")
            buffers.append(glb_bin)
        elif uri.startswith("data:"):
            buffers.append(base64.b64decode(uri.split(",", 1)[1]))
        else:
            try:
                buffers.append((base_dir / uri).read_bytes())
            except OSError as exc:
                raise UnreadableFile(f"buffer {uri!r}: {exc}") from exc
    return buffers


def _read_accessor(doc: dict, buffers: list[bytes], index: int) -> np.ndarray:
    acc = doc["accessors"][index]
    if "sparse" in acc:
        raise MalformedGeometry("sparse accessors are not supported")
    dtype = np.dtype(_COMPONENT[acc["componentType"]])
    ncomp = _NCOMP[acc["type"]]
    count = acc["count"]
    view = doc["bufferViews"][acc["bufferView"]]
    data = buffers[view["buffer"]]
    start = view.get("byteOffset", 0) + acc.get("byteOffset", 0)
    stride = view.get("byteStride") or dtype.itemsize * ncomp
    if stride == dtype.itemsize * ncomp:
        out = np.frombuffer(data, dtype=dtype, count=count * ncomp, offset=start)
        return out.reshape(count, ncomp) if ncomp > 1 else out
    rows = [
        np.frombuffer(data, dtype=dtype, count=ncomp, offset=start + i * stride) for i in range(count)
    ]
    return np.array(rows).reshape(count, ncomp)


def _node_matrix(node: dict) -> np.ndarray:
    if "matrix" in node:
        return np.array(node["matrix"], dtype=np.float64).reshape(4, 4).T
    t = np.array(node.get("translation", [0, 0, 0]), dtype=np.float64)
    x, y, z, w = node.get("rotation", [0, 0, 0, 1])
    s = np.array(node.get("scale", [1, 1, 1]), dtype=np.float64)
    rot = np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )
    m = np.eye(4)
    m[:3, :3] = rot * s
    m[:3, 3] = t
    return m


def parse_gltf(data: bytes, base_dir: Path | str = ".") -> Scene:
    """Parse glTF 2.0 (JSON or GLB bytes), flattening the node hierarchy."""
    try:
        if data[:4] == b"glTF":
            doc, glb_bin = _split_glb(data)
        else:
            doc, glb_bin = json.loads(data.decode("utf-8")), None
    except (UnicodeDecodeError, json.JSONDecodeError, struct.error) as exc:
        raise UnreadableFile(f"not a glTF document ({exc})") from exc
    try:
        return _gltf_scene(doc, _load_buffers(doc, Path(base_dir), glb_bin))
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise MalformedGeometry(f"inconsistent glTF document ({exc!r})") from exc


def _gltf_scene(doc: dict, buffers: list[bytes]) -> Scene:
    nodes = doc.get("nodes", [])
    if "scenes" in doc and doc["scenes"]:
        roots = doc["scenes"][doc.get("scene", 0)].get("nodes", [])
    else:
        children = {c for n in nodes for c in n.get("children", [])}
        roots = [i for i in range(len(nodes)) if i not in children]

    meshes: list[Mesh] = []
    seen: dict[str, int] = {}
    unnamed = 0

    def visit(index: int, parent_names: list[str], parent_matrix: np.ndarray):
        nonlocal unnamed
        node = nodes[index]
        matrix = parent_matrix @ _node_matrix(node)
        names = parent_names + ([node["name"]] if node.get("name") else [])
        if "mesh" in node:
            mesh_doc = doc["meshes"][node["mesh"]]
            if node.get("name"):
                path = "/" + "/".join(names)
            elif mesh_doc.get("name"):
                path = "/" + "/".join(names + [mesh_doc["name"]])
            else:
                path = f"/unnamed/{unnamed}"
                unnamed += 1
            if path in seen:
                seen[path] += 1
                path = f"{path}~{seen[path]}"
            else:
                seen[path] = 0
            verts, faces, base = [], [], 0
            for prim in mesh_doc.get("primitives", []):
                if prim.get("mode", 4) != 4:
                    raise MalformedGeometry(f"{path}: only triangle primitives are supported")
                pos = _read_accessor(doc, buffers, prim["attributes"]["POSITION"]).astype(np.float64)
                if "indices" in prim:
                    idx = _read_accessor(doc, buffers, prim["indices"]).astype(np.int64)
                else:
                    idx = np.arange(len(pos), dtype=np.int64)
                if idx.size % 3:
                    raise MalformedGeometry(f"{path}: index count not a multiple of 3")
                if idx.size and idx.max() >= len(pos):
                    raise MalformedGeometry(f"{path}: face references missing vertex")
                world = pos @ matrix[:3, :3].T + matrix[:3, 3]
                verts.append(world)
                faces.append(idx.reshape(-1, 3) + base)
                base += len(pos)
            meshes.append(
                Mesh(
                    path,
                    np.concatenate(verts) if verts else np.zeros((0, 3)),
                    np.concatenate(faces) if faces else np.zeros((0, 3), dtype=np.int64),
                )
            )
        for child in node.get("children", []):
            visit(child, names, matrix)

    for root in roots:
        visit(root, [], np.eye(4))
    return Scene(tuple(meshes))


# --------------------------------------------------------------------------
# exclusion and statistics


def apply_exclusions(
    scene: Scene, exclude_paths: Sequence[str] = (), ground_paths: Sequence[str] = ()
) -> Scene:
    """Flag meshes matching glob patterns as excluded or as ground.

    Meshes are never removed. A pattern that matches nothing is logged as a
    warning.
    """
    for patterns, kind in ((exclude_paths, "exclude"), (ground_paths, "ground")):
        for pattern in patterns:
            hits = sum(fnmatch.fnmatchcase(m.path, pattern) for m in scene.meshes)
            if hits == 0:
                logger.warning("%s pattern %r matched 0 meshes", kind, pattern)

    def matches(path, patterns):
        return any(fnmatch.fnmatchcase(path, p) for p in patterns)

    meshes = []
    for mesh in scene.meshes:
        excluded = mesh.excluded or matches(mesh.path, exclude_paths)
        ground = mesh.is_ground or matches(mesh.path, ground_paths)
        if excluded != mesh.excluded or ground != mesh.is_ground:
            mesh = dataclasses.replace(mesh, excluded=excluded, is_ground=ground)
        meshes.append(mesh)
    result = Scene(tuple(meshes))
    logger.info(
        "exclusions applied: %d excluded, %d ground, %d active",
        sum(m.excluded for m in result),
        sum(m.is_ground for m in result),
        sum(m.active for m in result),
    )
    return result


def scene_stats(scene: Scene) -> SceneStats:
    nonempty = [m.vertices for m in scene.meshes if len(m.vertices)]
    if nonempty:
        allv = np.concatenate(nonempty)
        lo, hi = tuple(allv.min(axis=0).tolist()), tuple(allv.max(axis=0).tolist())
    else:
        lo = hi = (0.0, 0.0, 0.0)
    return SceneStats(
        mesh_count=len(scene.meshes),
        active_count=sum(m.active for m in scene.meshes),
        excluded_count=sum(m.excluded for m in scene.meshes),
        ground_count=sum(m.is_ground for m in scene.meshes),
        vertex_count=sum(len(m.vertices) for m in scene.meshes),
        face_count=sum(len(m.faces) for m in scene.meshes),
        bounds_min=lo,
        bounds_max=hi,
    )
