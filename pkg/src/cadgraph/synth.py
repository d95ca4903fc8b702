"""Procedural pipe-plant scenes with exact ground truth.

Pipe runs are axis-aligned polylines of octagonal prisms. Inline elements
(valves, gauge tees, flange pairs, tanks, elbows, deliberate gaps) occupy
arclength intervals; plain pipe fills the rest. Surfaces that other parts
touch are strip-tessellated at 1 cm so that edge sampling reaches every
voxel of the contact face.

Ground truth is derived from the layout, not from geometry queries:
clusters are the run segments (split at open gaps) joined through tanks, and
functional relations link consecutive units along each run.
"""

from __future__ import annotations

import itertools
import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidSpec
from .functional import FunctionalGraph, UnitNode
from .labeling import Provenance, SemanticLabel
from .scene_io import Mesh, Scene, save_scene

ATTACHMENT_TYPES = ("valve", "gauge", "tank", "flange_pair", "bolt_cluster")

STRIP = 0.01
MIN_FREE_PIPE = 0.05
CLEARANCE = 0.03

VALVE_HALF_LENGTH = 0.06
VALVE_MARGIN = 0.03
TEE_HALF_LENGTH = 0.05
STEM_HALF_WIDTH = 0.015
STEM_LENGTH = 0.10
DIAL_APOTHEM = 0.05
DIAL_THICKNESS = 0.02
FLANGE_THICKNESS = 0.03
GASKET_THICKNESS = 0.003
FLANGE_EXTRA = 0.04
BOLT_SIZE = 0.006
DEFAULT_TANK_HALF = 0.2

PIPE = "Pipe assembly"
VALVE = "Valve assembly"
GAUGE = "Gauge"
TANK = "Tank"


# --------------------------------------------------------------------------
# spec


@dataclass(frozen=True)
class RunSpec:
    waypoints: tuple[tuple[float, float, float], ...]
    radius: float = 0.05


@dataclass(frozen=True)
class Attachment:
    type: str
    run: int
    t: float
    count: int = 0
    mount: str = "pipe"
    size: float | None = None


@dataclass(frozen=True)
class Gap:
    run: int
    t: float
    width: float


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    runs: tuple[RunSpec, ...] = ()
    attachments: tuple[Attachment, ...] = ()
    gap_pairs: tuple[Gap, ...] = ()
    ground: bool = True
    name: str = "case"

    @classmethod
    def from_dict(cls, doc) -> "SynthSpec":
        try:
            return cls(
                seed=int(doc.get("seed", 0)),
                runs=tuple(
                    RunSpec(tuple(tuple(map(float, w)) for w in r["waypoints"]), float(r.get("radius", 0.05)))
                    for r in doc.get("runs", [])
                ),
                attachments=tuple(
                    Attachment(
                        a["type"],
                        int(a["run"]),
                        float(a["t"]),
                        int(a.get("count", 0)),
                        a.get("mount", "pipe"),
                        a.get("size"),
                    )
                    for a in doc.get("attachments", [])
                ),
                gap_pairs=tuple(
                    Gap(int(g["run"]), float(g["t"]), float(g["width"])) for g in doc.get("gap_pairs", [])
                ),
                ground=bool(doc.get("ground", True)),
                name=str(doc.get("name", "case")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidSpec(f"malformed synth spec: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "ground": self.ground,
            "runs": [{"waypoints": [list(w) for w in r.waypoints], "radius": r.radius} for r in self.runs],
            "attachments": [
                {k: v for k, v in a.__dict__.items() if v is not None} for a in self.attachments
            ],
            "gap_pairs": [g.__dict__ for g in self.gap_pairs],
        }


@dataclass
class SynthCase:
    spec: SynthSpec
    scene: Scene
    gt_labels: dict[str, SemanticLabel]
    gt_units: list[tuple[str, tuple[str, ...]]]
    gt_functional: FunctionalGraph
    gt_clusters: frozenset[frozenset[str]]

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_scene(self.scene, out / "scene.json")
        (out / "gt_labels.json").write_text(
            json.dumps({p: {"group": l.group, "name": l.name} for p, l in sorted(self.gt_labels.items())}, indent=1)
        )
        (out / "gt_units.json").write_text(
            json.dumps([{"type": t, "meshes": list(m)} for t, m in self.gt_units], indent=1)
        )
        (out / "gt_functional.json").write_text(json.dumps(self.gt_functional.to_dict(), indent=1))
        (out / "gt_clusters.json").write_text(json.dumps(clusters_to_list(self.gt_clusters), indent=1))
        (out / "spec.json").write_text(json.dumps(self.spec.to_dict(), indent=1))
        return out


def clusters_to_list(partition: Iterable[Iterable[str]]) -> list[list[str]]:
    return sorted(sorted(c) for c in partition)


# --------------------------------------------------------------------------
# tessellation helpers


def _rect(origin, e1, e2, dense: bool):
    """Rectangle origin + a*e1 + b*e2, split into strips along the longer side."""
    origin, e1, e2 = (np.asarray(v, dtype=float) for v in (origin, e1, e2))
    if np.linalg.norm(e1) < np.linalg.norm(e2):
        e1, e2 = e2, e1
    n = max(1, math.ceil(np.linalg.norm(e2) / STRIP - 1e-9)) if dense else 1
    verts = []
    for i in range(n + 1):
        base = origin + e2 * (i / n)
        verts.append(base)
        verts.append(base + e1)
    faces = []
    for i in range(n):
        a, b, c, d = 2 * i, 2 * i + 1, 2 * i + 3, 2 * i + 2
        faces.append((a, b, c))
        faces.append((a, c, d))
    return np.array(verts), np.array(faces)


def _merge(parts):
    verts, faces, base = [], [], 0
    for v, f in parts:
        verts.append(v)
        faces.append(f + base)
        base += len(v)
    return np.concatenate(verts), np.concatenate(faces)


def box_mesh(lo, hi, dense: bool = True):
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    ext = hi - lo
    ex, ey, ez = np.diag(ext)
    parts = [
        _rect(lo, ey, ez, dense),
        _rect(lo + ex, ey, ez, dense),
        _rect(lo, ex, ez, dense),
        _rect(lo + ey, ex, ez, dense),
        _rect(lo, ex, ey, dense),
        _rect(lo + ez, ex, ey, dense),
    ]
    return _merge(parts)


def _perp_axes(direction):
    d = np.asarray(direction, dtype=float)
    up = np.array([1.0, 0.0, 0.0]) if abs(d[2]) > 0.5 else np.array([0.0, 0.0, 1.0])
    side = np.cross(d, up)
    return up, side


def prism_mesh(p0, p1, apothem: float, dense_walls: bool = False):
    """Octagonal prism from p0 to p1 with flats facing the two normal axes."""
    p0, p1 = np.asarray(p0, dtype=float), np.asarray(p1, dtype=float)
    axis = p1 - p0
    d = axis / np.linalg.norm(axis)
    up, side = _perp_axes(d)
    rim = apothem / math.cos(math.pi / 8)
    angles = [math.pi / 8 + k * math.pi / 4 for k in range(8)]
    ring = np.array([rim * (math.cos(a) * up + math.sin(a) * side) for a in angles])
    parts = []
    for k in range(8):
        a, b = ring[k], ring[(k + 1) % 8]
        parts.append(_rect(p0 + a, axis, b - a, dense_walls))
    for centre in (p0, p1):
        v = np.vstack([centre, centre + ring])
        f = np.array([(0, 1 + k, 1 + (k + 1) % 8) for k in range(8)])
        parts.append((v, f))
    return _merge(parts)


def _aabb(verts):
    return verts.min(axis=0), verts.max(axis=0)


def _box_gap(a, b) -> float:
    (alo, ahi), (blo, bhi) = a, b
    gap = np.maximum(0.0, np.maximum(alo - bhi, blo - ahi))
    return float(np.linalg.norm(gap))


# --------------------------------------------------------------------------
# layout


@dataclass
class _Item:
    kind: str  # elbow, valve, tee, flange, tank, gap
    s0: float
    s1: float
    key: str = ""
    unit: str | None = None


@dataclass
class _Built:
    meshes: dict[str, np.ndarray] = field(default_factory=dict)  # path -> (verts, faces)
    labels: dict[str, tuple[str, str]] = field(default_factory=dict)
    owner: dict[str, tuple] = field(default_factory=dict)  # path -> (run, segment) or ("tank", i)
    units: dict[str, tuple[str, list[str]]] = field(default_factory=dict)
    contacts: set[frozenset] = field(default_factory=set)
    run_of: dict[str, int] = field(default_factory=dict)
    small: set[str] = field(default_factory=set)

    def add(self, path, mesh, label, owner, run=None):
        self.meshes[path] = mesh
        self.labels[path] = label
        self.owner[path] = owner
        if run is not None:
            self.run_of[path] = run

    def touch(self, a, b):
        self.contacts.add(frozenset((a, b)))


class _Run:
    def __init__(self, index: int, spec: RunSpec):
        self.index = index
        self.radius = spec.radius
        pts = np.array(spec.waypoints, dtype=float)
        if len(pts) < 2:
            raise InvalidSpec(f"run {index} needs at least two waypoints")
        if spec.radius <= 0:
            raise InvalidSpec(f"run {index}: radius must be positive")
        self.points = pts
        seg = np.diff(pts, axis=0)
        lengths = np.linalg.norm(seg, axis=1)
        for k, v in enumerate(seg):
            if np.count_nonzero(np.abs(v) > 1e-12) != 1:
                raise InvalidSpec(f"run {index} segment {k} is not axis-aligned")
        self.dirs = seg / lengths[:, None]
        self.cum = np.concatenate([[0.0], np.cumsum(lengths)])
        self.length = float(self.cum[-1])

    def locate(self, s: float) -> tuple[int, np.ndarray, np.ndarray]:
        k = int(np.searchsorted(self.cum, s, side="right") - 1)
        k = min(max(k, 0), len(self.dirs) - 1)
        return k, self.points[k] + self.dirs[k] * (s - self.cum[k]), self.dirs[k]

    def point(self, s):
        return self.locate(s)[1]


def _layer(c: float, pitch: float) -> int:
    return math.floor(c / pitch + 1e-9)


def generate(spec: SynthSpec, pitch: float = 0.01, epsilon: float = 0.01) -> SynthCase:
    """Build the scene and its ground truth for ``spec``.

    ``pitch`` and ``epsilon`` only matter for deciding whether a narrow
    deliberate gap is bridged on the voxel lattice.
    """
    rng = random.Random(spec.seed)
    runs = [_Run(i, r) for i, r in enumerate(spec.runs)]
    if not runs:
        raise InvalidSpec("spec without runs")
    for a in spec.attachments:
        if a.type not in ATTACHMENT_TYPES:
            raise InvalidSpec(f"unknown attachment type {a.type!r}")
        if not 0.0 <= a.t <= 1.0:
            raise InvalidSpec(f"attachment t={a.t} outside [0, 1]")
        if not 0 <= a.run < len(runs):
            raise InvalidSpec(f"attachment names missing run {a.run}")
    for g in spec.gap_pairs:
        if not 0 <= g.run < len(runs) or not 0.0 < g.t < 1.0:
            raise InvalidSpec(f"bad gap {g}")
        if g.width < epsilon:
            raise InvalidSpec(f"gap width {g.width} is below epsilon {epsilon}")

    built = _Built()
    items: list[list[_Item]] = [[] for _ in runs]
    root = "/plant"

    # tanks first: they clip every run that passes through them
    tanks = []
    for i, a in enumerate(a for a in spec.attachments if a.type == "tank"):
        run = runs[a.run]
        centre = run.point(a.t * run.length)
        half = float(a.size or DEFAULT_TANK_HALF)
        path = f"{root}/tank_{i:02d}/shell"
        built.add(path, box_mesh(centre - half, centre + half), (TANK, "Storage tank"), ("tank", i))
        built.units[path] = (TANK, [path])
        tanks.append((path, centre - half, centre + half))
    for run in runs:
        for tpath, lo, hi in tanks:
            for k, d in enumerate(run.dirs):
                p0, p1 = run.points[k], run.points[k + 1]
                axis = int(np.argmax(np.abs(d)))
                others = [c for c in range(3) if c != axis]
                if not all(lo[c] < p0[c] < hi[c] for c in others):
                    if all(lo[c] - run.radius - CLEARANCE < p0[c] < hi[c] + run.radius + CLEARANCE for c in others):
                        seg_lo, seg_hi = sorted((p0[axis], p1[axis]))
                        if seg_hi > lo[axis] - CLEARANCE and seg_lo < hi[axis] + CLEARANCE:
                            raise InvalidSpec(f"run {run.index} grazes {tpath}")
                    continue
                if not all(lo[c] + run.radius * 1.1 <= p0[c] <= hi[c] - run.radius * 1.1 for c in others):
                    raise InvalidSpec(f"run {run.index} enters {tpath} too close to an edge")
                a0, a1 = p0[axis], p1[axis]
                enter = (lo[axis] - a0) / (a1 - a0)
                leave = (hi[axis] - a0) / (a1 - a0)
                t0, t1 = max(min(enter, leave), 0.0), min(max(enter, leave), 1.0)
                if t0 >= t1:
                    continue
                seg_len = run.cum[k + 1] - run.cum[k]
                items[run.index].append(
                    _Item("tank", run.cum[k] + t0 * seg_len, run.cum[k] + t1 * seg_len, tpath, tpath)
                )

    for run in runs:
        for k in range(1, len(run.points) - 1):
            s = run.cum[k]
            items[run.index].append(_Item("elbow", s - run.radius, s + run.radius, f"elbow_{k - 1:02d}"))

    counters: dict[tuple[int, str], int] = {}

    def next_name(run_idx, kind):
        n = counters.get((run_idx, kind), 0)
        counters[(run_idx, kind)] = n + 1
        return f"{kind}_{n:02d}"

    valves_at: dict[tuple[int, float], str] = {}
    for a in spec.attachments:
        run = runs[a.run]
        s = a.t * run.length
        r = run.radius
        if a.type == "valve":
            name = next_name(a.run, "valve")
            items[a.run].append(_Item("valve", s - VALVE_HALF_LENGTH, s + VALVE_HALF_LENGTH, name))
            valves_at[(a.run, round(a.t, 9))] = name
        elif a.type == "gauge" and a.mount == "pipe":
            name = next_name(a.run, "gauge")
            items[a.run].append(_Item("tee", s - TEE_HALF_LENGTH, s + TEE_HALF_LENGTH, name))
        elif a.type == "flange_pair":
            half = FLANGE_THICKNESS + GASKET_THICKNESS / 2
            items[a.run].append(_Item("flange", s - half, s + half, next_name(a.run, "flange")))
        elif a.type == "gauge" and a.mount not in ("pipe", "valve"):
            raise InvalidSpec(f"unknown gauge mount {a.mount!r}")
        if a.type in ("valve", "tee") and s - VALVE_HALF_LENGTH < 0:
            raise InvalidSpec("inline element overhangs the run start")
    for i, g in enumerate(spec.gap_pairs):
        s = g.t * runs[g.run].length
        items[g.run].append(_Item("gap", s - g.width / 2, s + g.width / 2, f"gap_{i:02d}"))

    # order, validate spacing, build pieces
    for run in runs:
        seq = sorted(items[run.index], key=lambda it: (it.s0, it.s1))
        for it in seq:
            if it.kind != "tank" and (it.s0 < -1e-9 or it.s1 > run.length + 1e-9):
                raise InvalidSpec(f"run {run.index}: {it.kind} extends past the run ends")
        for a, b in zip(seq, seq[1:]):
            if b.s0 - a.s1 < MIN_FREE_PIPE - 1e-9:
                raise InvalidSpec(
                    f"run {run.index}: {a.kind} and {b.kind} need {MIN_FREE_PIPE} m of pipe between them"
                )
        items[run.index] = seq

    segment_of: dict[tuple[int, str], int] = {}
    gap_closed: dict[tuple[int, str], bool] = {}
    for run in runs:
        rp = f"{root}/run{run.index:02d}"
        seq = items[run.index]
        r = run.radius
        segment = 0
        cursor = 0.0
        prev_piece: str | None = None
        prev_item: _Item | None = None
        piece_no = 0
        bounds = [(it.s0, it.s1) for it in seq]
        free = []
        for s0, s1 in bounds:
            free.append((cursor, s0))
            cursor = max(cursor, s1)
        free.append((cursor, run.length))

        def item_paths(it):
            return built_item_paths.get((run.index, it.key), [])

        built_item_paths: dict[tuple[int, str], list[str]] = {}
        for idx in range(len(seq) + 1):
            f0, f1 = free[idx]
            piece = None
            if f1 - f0 > 1e-9:
                piece = f"{rp}/pipe_{piece_no:03d}"
                piece_no += 1
                _, p0, _ = run.locate(f0 + 1e-12 if idx else f0)
                k0, _, _ = run.locate(f0 + (f1 - f0) / 2)
                d = run.dirs[k0]
                p0 = run.points[k0] + d * (f0 - run.cum[k0])
                p1 = run.points[k0] + d * (f1 - run.cum[k0])
                built.add(piece, prism_mesh(p0, p1, r), (PIPE, "Straight pipe"), (run.index, segment), run.index)
                if prev_item is not None and prev_item.kind != "gap":
                    for p in item_paths(prev_item)[:1] if prev_item.kind != "tank" else [prev_item.key]:
                        built.touch(piece, p)
                if prev_item is not None and prev_item.kind == "gap":
                    pass
            segment_start_piece = piece
            if idx == len(seq):
                break
            it = seq[idx]
            if it.kind == "gap":
                # closed iff the two caps land on voxel layers within epsilon
                _, pa, d = run.locate(it.s0)
                _, pb, _ = run.locate(it.s1)
                axis = int(np.argmax(np.abs(d)))
                delta = abs(_layer(pb[axis], pitch) - _layer(pa[axis], pitch))
                closed = delta * pitch <= epsilon + 1e-12
                gap_closed[(run.index, it.key)] = closed
                if not closed:
                    segment += 1
                prev_item = it
                prev_piece = segment_start_piece
                continue
            paths = _build_item(built, run, it, rp, rng, segment, valves_at, spec)
            built_item_paths[(run.index, it.key)] = paths
            segment_of[(run.index, it.key)] = segment
            if piece is not None:
                if it.kind == "tank":
                    built.touch(piece, it.key)
                else:
                    built.touch(piece, paths[0])
            prev_item = it
            prev_piece = piece
        # the last inline element's far side touches the following piece,
        # recorded above through prev_item; remember gap neighbours
        _ = prev_piece

    # valve-mounted gauges and bolt clusters
    for a in spec.attachments:
        run = runs[a.run]
        rp = f"{root}/run{a.run:02d}"
        if a.type == "gauge" and a.mount == "valve":
            vname = valves_at.get((a.run, round(a.t, 9)))
            if vname is None:
                raise InvalidSpec(f"valve-mounted gauge at t={a.t} has no valve at that position")
            _valve_gauge(built, run, a, rp, vname, rng)
        elif a.type == "bolt_cluster":
            if a.count <= 0:
                raise InvalidSpec("bolt_cluster needs a positive count")
            _bolts(built, run, a, rp, items[a.run], rng)

    if spec.ground:
        allv = np.concatenate([v for v, _ in built.meshes.values()])
        lo, hi = allv.min(axis=0) - 0.5, allv.max(axis=0) + 0.5
        if lo[2] + 0.5 < 0.1:
            raise InvalidSpec("geometry must stay at least 0.1 m above the ground plane")
        gv = np.array([[lo[0], lo[1], 0.0], [hi[0], lo[1], 0.0], [hi[0], hi[1], 0.0], [lo[0], hi[1], 0.0]])
        built.add("/ground", (gv, np.array([[0, 1, 2], [0, 2, 3]])), ("Structural element", "Ground plane"), ("ground",))

    _validate_clearance(built, runs, spec)
    return _assemble(spec, built, runs, items, gap_closed)


def _build_item(built: _Built, run: _Run, it: _Item, rp: str, rng, segment, valves_at, spec) -> list[str]:
    r = run.radius
    owner = (run.index, segment)
    k, p0, d = run.locate((it.s0 + it.s1) / 2)
    centre = run.points[k] + d * ((it.s0 + it.s1) / 2 - run.cum[k])
    up, side = _perp_axes(d)
    if it.kind == "tank":
        return [it.key]
    if it.kind == "elbow":
        corner = run.points[int(it.key.split("_")[1]) + 1]
        path = f"{rp}/{it.key}"
        built.add(path, box_mesh(corner - r, corner + r), (PIPE, "Pipe elbow"), owner, run.index)
        return [path]
    start = run.points[k] + d * (it.s0 - run.cum[k])
    end = run.points[k] + d * (it.s1 - run.cum[k])
    if it.kind == "valve":
        hw = r + VALVE_MARGIN
        body_lo = np.minimum(start, end) - (np.abs(up) + np.abs(side)) * hw
        body_hi = np.maximum(start, end) + (np.abs(up) + np.abs(side)) * hw
        body = f"{rp}/{it.key}/body"
        name = rng.choice(["Gate valve", "Ball valve"])
        built.add(body, box_mesh(body_lo, body_hi), (VALVE, name), owner, run.index)
        span = np.abs(d) * (VALVE_HALF_LENGTH + 0.02) + np.abs(side) * (hw + 0.02)
        w_lo = centre + up * hw - span
        w_hi = centre + up * (hw + 0.02) + span
        wheel = f"{rp}/{it.key}/wheel"
        built.add(wheel, box_mesh(np.minimum(w_lo, w_hi), np.maximum(w_lo, w_hi)), (VALVE, "Handwheel"), owner, run.index)
        built.touch(body, wheel)
        built.units[body] = (VALVE, [body, wheel])
        valves_at[(run.index, it.key)] = body
        return [body, wheel]
    if it.kind == "tee":
        tee = f"{rp}/{it.key}_tee"
        built.add(tee, prism_mesh(start, end, r, dense_walls=True), (PIPE, "Pipe tee"), owner, run.index)
        stem_lo = centre + up * r - (np.abs(d) + np.abs(side)) * STEM_HALF_WIDTH
        stem_hi = centre + up * (r + STEM_LENGTH) + (np.abs(d) + np.abs(side)) * STEM_HALF_WIDTH
        stem = f"{rp}/{it.key}/stem"
        built.add(stem, box_mesh(np.minimum(stem_lo, stem_hi), np.maximum(stem_lo, stem_hi)), (GAUGE, "Gauge stem"), owner, run.index)
        dial = f"{rp}/{it.key}/dial"
        base = centre + up * (r + STEM_LENGTH)
        built.add(dial, prism_mesh(base, base + up * DIAL_THICKNESS, DIAL_APOTHEM), (GAUGE, "Pressure gauge"), owner, run.index)
        built.touch(tee, stem)
        built.touch(stem, dial)
        built.units[stem] = (GAUGE, [stem, dial])
        return [tee]
    if it.kind == "flange":
        a_end = start + d * FLANGE_THICKNESS
        g_end = a_end + d * GASKET_THICKNESS
        fa, gk, fb = f"{rp}/{it.key}/a", f"{rp}/{it.key}/gasket", f"{rp}/{it.key}/b"
        built.add(fa, prism_mesh(start, a_end, r + FLANGE_EXTRA), (PIPE, "Flange"), owner, run.index)
        built.add(gk, prism_mesh(a_end, g_end, r + FLANGE_EXTRA / 2), (PIPE, "Gasket"), owner, run.index)
        built.add(fb, prism_mesh(g_end, end, r + FLANGE_EXTRA), (PIPE, "Flange"), owner, run.index)
        built.touch(fa, gk)
        built.touch(gk, fb)
        return [fa, fb]
    raise InvalidSpec(f"unsupported inline element {it.kind}")


def _valve_gauge(built: _Built, run: _Run, a: Attachment, rp: str, vname: str, rng):
    body = f"{rp}/{vname}/body"
    s = a.t * run.length
    k, centre, d = run.locate(s)
    up, side = _perp_axes(d)
    side = side * rng.choice([1.0, -1.0])
    hw = run.radius + VALVE_MARGIN
    face = centre + side * hw
    cross = (np.abs(d) + np.abs(up)) * STEM_HALF_WIDTH
    tip = face + side * STEM_LENGTH
    stem = f"{rp}/{vname}_gauge/stem"
    lo, hi = np.minimum(face, tip) - cross, np.maximum(face, tip) + cross
    built.add(stem, box_mesh(lo, hi), (GAUGE, "Gauge stem"), built.owner[body], run.index)
    dial = f"{rp}/{vname}_gauge/dial"
    built.add(dial, prism_mesh(tip, tip + side * DIAL_THICKNESS, DIAL_APOTHEM), (GAUGE, "Pressure gauge"), built.owner[body], run.index)
    built.touch(body, stem)
    built.touch(stem, dial)
    built.units[stem] = (GAUGE, [stem, dial])
    built.units.setdefault("__mounted__", ("", []))[1].append((body, stem))


def _bolts(built: _Built, run: _Run, a: Attachment, rp: str, seq: list[_Item], rng):
    s = a.t * run.length
    flange = next((it for it in seq if it.kind == "flange" and it.s0 - 0.05 <= s <= it.s1 + 0.05), None)
    r = run.radius
    if flange is not None:
        k, _, d = run.locate((flange.s0 + flange.s1) / 2)
        face = run.points[k] + d * (flange.s0 - run.cum[k])
        anchor = f"{rp}/{flange.key}/a"
        ring = r + 0.025
        centre = face - d * (BOLT_SIZE / 2)
        owner = built.owner[anchor]
    else:
        k, centre, d = run.locate(s)
        ring = r / math.cos(math.pi / 8) + BOLT_SIZE / 2 + 0.002
        owner = None
        for path, own in built.owner.items():
            if own[0] == run.index and path.startswith(rp + "/pipe_"):
                owner = own
                break
    up, side = _perp_axes(d)
    phase = rng.uniform(0, 2 * math.pi / a.count)
    bolt_idx = sum(1 for p in built.meshes if p.startswith(f"{rp}/bolts"))
    group = f"{rp}/bolts_{bolt_idx:03d}"
    for i in range(a.count):
        ang = phase + 2 * math.pi * i / a.count
        c = centre + ring * (math.cos(ang) * up + math.sin(ang) * side)
        path = f"{group}/bolt_{i:03d}"
        built.add(path, box_mesh(c - BOLT_SIZE / 2, c + BOLT_SIZE / 2, dense=False), (PIPE, "Bolt"), owner, run.index)
        built.small.add(path)


def _validate_clearance(built: _Built, runs, spec):
    boxes = {p: _aabb(v) for p, (v, _) in built.meshes.items() if p != "/ground"}
    unit_of = {}
    for key, (kind, members) in built.units.items():
        if key == "__mounted__":
            continue
        for m in members:
            unit_of[m] = key
    paths = sorted(p for p in boxes if p not in built.small)
    for a, b in itertools.combinations(paths, 2):
        if frozenset((a, b)) in built.contacts:
            continue
        if unit_of.get(a) is not None and unit_of.get(a) == unit_of.get(b):
            continue
        in_unit = a in unit_of or b in unit_of
        ra, rb = built.run_of.get(a), built.run_of.get(b)
        cross_run = ra is not None and rb is not None and ra != rb
        if not (in_unit or cross_run):
            continue
        gap = _box_gap(boxes[a], boxes[b])
        if gap < CLEARANCE - 1e-9:
            raise InvalidSpec(f"{a} and {b} are only {gap:.4f} m apart (need {CLEARANCE} m)")


def _assemble(spec, built: _Built, runs, items, gap_closed) -> SynthCase:
    meshes = []
    for path, (v, f) in built.meshes.items():
        meshes.append(Mesh(path, v, f, is_ground=(path == "/ground")))
    scene = Scene(tuple(meshes))
    labels = {p: SemanticLabel(g, n, Provenance.GROUND_TRUTH) for p, (g, n) in built.labels.items()}

    # clusters: run segments joined through tanks
    parent: dict = {}

    def find(x):
        parent.setdefault(x, x)
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a, b):
        parent[find(a)] = find(b)

    seg_of_tank = {}
    for run in runs:
        segment = 0
        for it in items[run.index]:
            if it.kind == "gap" and not gap_closed[(run.index, it.key)]:
                segment += 1
            if it.kind == "tank":
                union(("tank", it.key), (run.index, segment))
                seg_of_tank[it.key] = True
    members: dict = {}
    for path, own in built.owner.items():
        if path == "/ground":
            continue
        if own and own[0] == "tank":
            key = find(("tank", path))
        else:
            key = find(own)
        members.setdefault(key, set()).add(path)
    clusters = frozenset(frozenset(m) for m in members.values())

    # functional ground truth: consecutive units along each run
    units = {k: v for k, v in built.units.items() if k != "__mounted__"}
    ordered = sorted(units, key=lambda k: min(units[k][1]))
    index = {k: i + 1 for i, k in enumerate(ordered)}
    edges = set()
    for run in runs:
        last = None
        for it in items[run.index]:
            if it.kind == "gap":
                if not gap_closed[(run.index, it.key)]:
                    last = None
                continue
            unit = None
            if it.kind == "tank":
                unit = it.key
            elif it.kind == "valve":
                unit = f"/plant/run{run.index:02d}/{it.key}/body"
            elif it.kind == "tee":
                unit = f"/plant/run{run.index:02d}/{it.key}/stem"
            if unit is None:
                continue
            if last is not None and last != unit:
                edges.add((min(index[last], index[unit]), max(index[last], index[unit])))
            last = unit
    for body, stem in built.units.get("__mounted__", ("", []))[1]:
        edges.add((min(index[body], index[stem]), max(index[body], index[stem])))
    fg = FunctionalGraph(
        tuple(UnitNode(index[k], units[k][0], tuple(sorted(units[k][1]))) for k in ordered),
        frozenset(edges),
    )
    gt_units = [(units[k][0], tuple(sorted(units[k][1]))) for k in ordered]
    return SynthCase(spec, scene, labels, gt_units, fg, clusters)


# --------------------------------------------------------------------------
# bundled suites

H = 0.6


def _spec(name, runs, attachments=(), gaps=(), seed=0):
    return SynthSpec(
        seed=seed,
        runs=tuple(RunSpec(tuple(map(tuple, w)), r) for w, r in runs),
        attachments=tuple(Attachment(**a) for a in attachments),
        gap_pairs=tuple(Gap(**g) for g in gaps),
        name=name,
    )


def suite() -> dict[str, SynthSpec]:
    """Functional-topology cases with generous separations."""
    specs = [
        _spec(
            "linear_chain",
            [([(0, 0, H), (2.0, 0, H)], 0.05)],
            [dict(type="valve", run=0, t=0.3), dict(type="gauge", run=0, t=0.7)],
            seed=1,
        ),
        _spec(
            "gauges_adjacent_segments",
            [([(0, 0, H), (1.2, 0, H), (1.2, 1.2, H)], 0.05)],
            [dict(type="gauge", run=0, t=0.3), dict(type="gauge", run=0, t=0.7)],
            seed=2,
        ),
        _spec(
            "tank_star",
            [
                ([(0, 0, H), (1.4, 0, H)], 0.05),
                ([(0, 0, H), (0, 1.4, H)], 0.05),
                ([(0, 0, H), (-1.4, 0, H)], 0.05),
            ],
            [
                dict(type="tank", run=0, t=0.0, size=0.25),
                dict(type="valve", run=0, t=0.6),
                dict(type="valve", run=1, t=0.6),
                dict(type="valve", run=2, t=0.6),
            ],
            seed=3,
        ),
        _spec(
            "disconnected_systems",
            [([(0, 0, H), (1.6, 0, H)], 0.05), ([(0, 0.5, H), (1.6, 0.5, H)], 0.05)],
            [
                dict(type="valve", run=0, t=0.3),
                dict(type="gauge", run=0, t=0.7),
                dict(type="valve", run=1, t=0.3),
                dict(type="gauge", run=1, t=0.7),
            ],
            seed=4,
        ),
        _spec(
            "valve_gauge_direct",
            [([(0, 0, H), (2.0, 0, H)], 0.05)],
            [
                dict(type="valve", run=0, t=0.4),
                dict(type="gauge", run=0, t=0.4, mount="valve"),
                dict(type="gauge", run=0, t=0.8),
            ],
            seed=5,
        ),
        _spec(
            "contested_corridor",
            [([(0, 0, H), (2.0, 0, H)], 0.05)],
            [
                dict(type="valve", run=0, t=0.2),
                dict(type="flange_pair", run=0, t=0.5),
                dict(type="valve", run=0, t=0.8),
            ],
            seed=6,
        ),
        _spec(
            "bolt_cluster",
            [([(0, 0, H), (1.0, 0, H), (1.0, 1.0, H)], 0.05)],
            [
                dict(type="flange_pair", run=0, t=0.25),
                dict(type="bolt_cluster", run=0, t=0.25, count=50),
                dict(type="valve", run=0, t=0.75),
            ],
            seed=7,
        ),
        _spec(
            "split_pipe",
            [([(0, 0, H), (2.0, 0, H)], 0.05)],
            [dict(type="valve", run=0, t=0.25), dict(type="gauge", run=0, t=0.75)],
            gaps=[dict(run=0, t=0.5, width=0.05)],
            seed=8,
        ),
    ]
    return {s.name: s for s in specs}


def adversarial_suite() -> dict[str, SynthSpec]:
    """Two pipe pieces 1.2 cm apart, placed to fall either side of epsilon.

    With the run along +x from 0, the caps sit at x = 1.000 / 1.012 (voxel
    layers 100 and 101, bridged) or x = 0.999 / 1.011 (layers 99 and 101,
    separate).
    """
    specs = [
        _spec(
            "gap_12mm_bridged",
            [([(0, 0, H), (2.0, 0, H)], 0.05)],
            [dict(type="valve", run=0, t=0.25), dict(type="gauge", run=0, t=0.75)],
            gaps=[dict(run=0, t=0.503, width=0.012)],
            seed=9,
        ),
        _spec(
            "gap_12mm_separate",
            [([(0, 0, H), (2.0, 0, H)], 0.05)],
            [dict(type="valve", run=0, t=0.25), dict(type="gauge", run=0, t=0.75)],
            gaps=[dict(run=0, t=0.5025, width=0.012)],
            seed=10,
        ),
    ]
    return {s.name: s for s in specs}
