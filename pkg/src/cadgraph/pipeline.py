"""Stage functions and the end-to-end run.

Every stage reads the previous stage's files and writes its own, so each one
can be rerun on its own. :func:`run_all` chains them and records a manifest
with input hashes, the configuration snapshot and per-stage timings.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

from .clustering import NOISE, Clustering, dbscan
from .errors import CadgraphError, ConfigError, StageError
from .evaluation import evaluate
from .functional import (
    DEFAULT_FUNCTIONAL_GROUPS,
    DEFAULT_PIPE_GROUPS,
    export_dot as export_functional_dot,
    extract_functional_relations,
    serialize as serialize_functional,
)
from .grouping import group_small_meshes, grouping_report, groups_from_report, mesh_geometry
from .labeling import (
    FileLabeler,
    RemoteLabeler,
    RetryPolicy,
    SemanticLabel,
    default_vocabulary,
    label_scene,
    load_vocabulary,
)
from .scene_graph import build_scene_graph, deserialize, export_dot, serialize
from .scene_io import apply_exclusions, load_scene, save_scene, scene_stats
from .spatial_index import adjacency_pairs, build_grid, pairwise_min_distances

logger = logging.getLogger(__name__)

SCENE = "scene.json"
PREPROCESS = "preprocess.json"
GROUPS = "groups.json"
CLUSTERS = "clusters.json"
GRAPH = "graph.json"
GRAPH_DOT = "graph.dot"
LABELS = "labels.json"
LABELED_GRAPH = "graph_labeled.json"
FUNCTIONAL = "functional.json"
FUNCTIONAL_DOT = "functional.dot"
REPORT = "report.json"
MANIFEST = "manifest.json"
LOG = "log.jsonl"


@dataclass
class LabelerConfig:
    kind: str = "file"  # file | remote | none
    labels: str | None = None
    endpoint: str | None = None
    model: str = "gpt-4o"
    max_attempts: int = 3
    max_workers: int = 1
    timeout_s: float = 60.0


@dataclass
class PipelineConfig:
    input: str | None = None
    format: str | None = None
    units: str | None = None
    exclude: list[str] = field(default_factory=list)
    ground: list[str] = field(default_factory=list)
    voxel_pitch: float = 0.01
    volume_threshold: float = 1e-6
    proximity_r_max: float = 0.10
    epsilon: float = 0.01
    min_samples: int = 1
    distance_cutoff: float = 0.05
    fill_interior: bool = False
    pipe_groups: list[str] = field(default_factory=lambda: list(DEFAULT_PIPE_GROUPS))
    functional_groups: list[str] = field(default_factory=lambda: list(DEFAULT_FUNCTIONAL_GROUPS))
    labeler: LabelerConfig = field(default_factory=LabelerConfig)
    vocabulary: str | None = None
    gt_labels: str | None = None
    gt_units: str | None = None
    out_dir: str = "out"

    def __post_init__(self):
        if isinstance(self.labeler, Mapping):
            self.labeler = LabelerConfig(**self.labeler)
        self.validate()

    def validate(self) -> None:
        for name in ("voxel_pitch", "volume_threshold", "proximity_r_max", "epsilon", "distance_cutoff"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value) or value <= 0:
                raise ConfigError(f"{name} must be a positive length, got {value!r}")
        if self.epsilon > self.distance_cutoff:
            raise ConfigError(f"epsilon {self.epsilon} exceeds distance_cutoff {self.distance_cutoff}")
        if self.min_samples < 1:
            raise ConfigError("min_samples must be >= 1")
        if self.labeler.kind not in ("file", "remote", "none"):
            raise ConfigError(f"unknown labeler kind {self.labeler.kind!r}")
        if self.labeler.max_attempts < 1 or self.labeler.max_workers < 1:
            raise ConfigError("labeler max_attempts and max_workers must be >= 1")

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "PipelineConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        labeler = changes.pop("labeler", None)
        cfg = dataclasses.replace(self, **changes)
        if labeler:
            cfg.labeler = dataclasses.replace(cfg.labeler, **labeler)
            cfg.validate()
        return cfg


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def _read_json(path) -> Any:
    return json.loads(Path(path).read_text())


# --------------------------------------------------------------------------
# stages


def stage_ingest(cfg: PipelineConfig, out: Path) -> dict:
    if not cfg.input:
        raise ConfigError("no input scene configured")
    scene = load_scene(cfg.input, cfg.format, cfg.units)
    scene = apply_exclusions(scene, cfg.exclude, cfg.ground)
    save_scene(scene, out / SCENE)
    stats = scene_stats(scene).to_dict()
    return {
        "meshes": stats["mesh_count"],
        "active": stats["active_count"],
        "excluded": stats["excluded_count"],
        "ground": stats["ground_count"],
    }


def stage_preprocess(cfg: PipelineConfig, out: Path) -> dict:
    scene = load_scene(out / SCENE)
    geometry = mesh_geometry(scene, cfg.voxel_pitch, cfg.fill_interior)
    report = {
        "voxel_pitch": cfg.voxel_pitch,
        "fill_interior": cfg.fill_interior,
        "meshes": {
            p: {"points": len(g.points), "volume_proxy": g.volume, "aabb": g.box.to_list()}
            for p, g in sorted(geometry.items())
        },
    }
    _write_json(out / PREPROCESS, report)
    return {"meshes": len(geometry), "points": sum(len(g.points) for g in geometry.values())}


def stage_group(cfg: PipelineConfig, out: Path) -> dict:
    scene = load_scene(out / SCENE)
    groups = group_small_meshes(
        scene, cfg.volume_threshold, cfg.proximity_r_max, cfg.voxel_pitch, fill_interior=cfg.fill_interior
    )
    report = grouping_report(groups)
    report["volume_threshold"] = cfg.volume_threshold
    report["proximity_r_max"] = cfg.proximity_r_max
    _write_json(out / GROUPS, report)
    return {"groups": len(groups), "promoted": report["promoted_count"]}


def _load_groups(cfg: PipelineConfig, out: Path):
    scene = load_scene(out / SCENE)
    return scene, groups_from_report(_read_json(out / GROUPS), scene, cfg.voxel_pitch, cfg.fill_interior)


def singleton_noise(clustering: Clustering) -> Clustering:
    """Give every noise group its own cluster, numbered after the others."""
    labels = dict(clustering.labels)
    next_id = clustering.n_clusters
    for gid in sorted(labels):
        if labels[gid] == NOISE:
            labels[gid] = next_id
            next_id += 1
    return Clustering(labels, clustering.epsilon, clustering.min_samples)


def stage_cluster(cfg: PipelineConfig, out: Path) -> dict:
    _, groups = _load_groups(cfg, out)
    cell = math.ceil(cfg.distance_cutoff / cfg.voxel_pitch - 1e-9) * cfg.voxel_pitch
    grid = build_grid(groups, cell_size=cell)
    dmap = pairwise_min_distances(groups, grid, cfg.distance_cutoff)
    clustering = dbscan(len(groups), dmap, cfg.epsilon, cfg.min_samples)
    by_id = {g.id: g for g in groups}
    doc = clustering.to_dict()
    doc["noise"] = clustering.noise()
    doc["clusters"] = {
        str(c): sorted(p for gid in members for p in by_id[gid].member_paths)
        for c, members in clustering.clusters().items()
    }
    doc["adjacency"] = [list(p) for p in adjacency_pairs(dmap, cfg.epsilon)]
    doc["distances"] = dmap.to_dict()
    _write_json(out / CLUSTERS, doc)
    return {"clusters": clustering.n_clusters, "noise": len(doc["noise"]), "pairs": len(dmap.entries)}


def stage_graph(cfg: PipelineConfig, out: Path, labels: Mapping[str, Any] | None = None) -> dict:
    _, groups = _load_groups(cfg, out)
    doc = _read_json(out / CLUSTERS)
    clustering = singleton_noise(Clustering.from_dict(doc))
    pairs = [tuple(p) for p in doc["adjacency"]]
    graph = build_scene_graph(groups, clustering, pairs, labels)
    (out / GRAPH).write_bytes(serialize(graph))
    (out / GRAPH_DOT).write_text(export_dot(graph))
    return {"mesh_nodes": len(graph.mesh_nodes()), "cluster_nodes": len(graph.cluster_nodes()), "edges": len(graph.edges)}


def make_labeler(cfg: PipelineConfig, out: Path):
    lc = cfg.labeler
    if lc.kind == "file":
        source = lc.labels or cfg.gt_labels
        if not source:
            raise ConfigError("the file labeler needs a label table (labeler.labels)")
        return FileLabeler.from_file(source)
    if lc.kind == "remote":
        if not lc.endpoint:
            raise ConfigError("the remote labeler needs an endpoint")
        return RemoteLabeler(lc.endpoint, lc.model, load_scene(out / SCENE), timeout=lc.timeout_s)
    return None


def stage_label(cfg: PipelineConfig, out: Path, labeler=None) -> dict:
    graph = deserialize((out / GRAPH).read_bytes())
    vocabulary = load_vocabulary(cfg.vocabulary) if cfg.vocabulary else default_vocabulary()
    labeler = labeler if labeler is not None else make_labeler(cfg, out)
    if labeler is None:
        (out / LABELED_GRAPH).write_bytes(serialize(graph))
        _write_json(out / LABELS, {"labels": {}, "mesh_labels": {}, "failures": {}})
        return {"labeled": 0, "failed": 0}
    result = label_scene(
        graph, labeler, vocabulary, RetryPolicy(cfg.labeler.max_attempts), cfg.labeler.max_workers
    )
    labeled = graph.with_labels(result.labels)
    (out / LABELED_GRAPH).write_bytes(serialize(labeled))
    doc = result.to_dict()
    doc["mesh_labels"] = {
        member: result.labels[n.path].to_dict()
        for n in graph.mesh_nodes()
        if n.path in result.labels
        for member in n.member_paths
    }
    _write_json(out / LABELS, doc)
    return {"labeled": len(result.labels), "failed": len(result.failures)}


def stage_functional(cfg: PipelineConfig, out: Path) -> dict:
    graph = deserialize((out / LABELED_GRAPH).read_bytes())
    fg = extract_functional_relations(
        graph, pipe_groups=cfg.pipe_groups, functional_groups=cfg.functional_groups
    )
    (out / FUNCTIONAL).write_bytes(serialize_functional(fg))
    (out / FUNCTIONAL_DOT).write_text(export_functional_dot(fg))
    return {"units": len(fg.units), "edges": len(fg.edges), "outer_iterations": fg.outer_iterations}


def read_label_file(path) -> dict[str, SemanticLabel]:
    """Per-mesh labels from a flat path -> label map or a labels.json file."""
    doc = _read_json(path)
    if isinstance(doc, dict) and "mesh_labels" in doc:
        doc = doc["mesh_labels"]
    return {p: SemanticLabel.from_dict(v) for p, v in doc.items()}


def stage_eval(cfg: PipelineConfig, out: Path) -> dict:
    if not cfg.gt_labels:
        return {"skipped": 1}
    pred = read_label_file(out / LABELS)
    gt = read_label_file(cfg.gt_labels)
    scene = load_scene(out / SCENE)
    scope = [m.path for m in scene.meshes if m.active and not m.is_ground and m.path in gt]
    units = _read_json(cfg.gt_units) if cfg.gt_units else ()
    report = evaluate(pred, gt, units, scope)
    _write_json(out / REPORT, report.to_dict())
    return {"scope": report.scope_size, "group_matches": report.group_matches, "name_matches": report.name_matches}


STAGES: list[tuple[str, Callable]] = [
    ("ingest", stage_ingest),
    ("preprocess", stage_preprocess),
    ("group", stage_group),
    ("cluster", stage_cluster),
    ("graph", stage_graph),
    ("label", stage_label),
    ("functional", stage_functional),
    ("eval", stage_eval),
]


# --------------------------------------------------------------------------
# orchestration


class _JsonLines(logging.Handler):
    def __init__(self, path: Path):
        super().__init__(logging.INFO)
        self.fh = open(path, "w")

    def emit(self, record):
        entry = {
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        entry.update(getattr(record, "fields", {}))
        self.fh.write(json.dumps(entry, sort_keys=True) + "\n")
        self.fh.flush()

    def close(self):
        self.fh.close()
        super().close()


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def run_stage(name: str, fn: Callable, cfg: PipelineConfig, out: Path, **kwargs) -> tuple[dict, float]:
    start = time.perf_counter()
    try:
        counters = fn(cfg, out, **kwargs)
    except ConfigError:
        raise
    except (CadgraphError, OSError, ValueError, KeyError) as exc:
        logger.error("stage %s failed: %s", name, exc, extra={"fields": {"stage": name, "event": "failed"}})
        raise StageError(name, exc) from exc
    elapsed = time.perf_counter() - start
    logger.info(
        "stage %s done",
        name,
        extra={"fields": {"stage": name, "event": "done", "counters": counters, "seconds": round(elapsed, 6)}},
    )
    return counters, elapsed


def run_all(cfg: PipelineConfig, labeler=None) -> Path:
    """Run every stage into ``cfg.out_dir`` and write the manifest.

    Outputs of completed stages are kept when a later stage fails.
    """
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    handler = _JsonLines(out / LOG)
    root = logging.getLogger("cadgraph")
    root.addHandler(handler)
    old_level = root.level
    root.setLevel(logging.INFO)
    manifest = {"config": cfg.to_dict(), "inputs": {}, "stages": {}, "timings": {}}
    for key in ("input", "vocabulary", "gt_labels", "gt_units"):
        value = getattr(cfg, key)
        if value and Path(value).is_file():
            manifest["inputs"][key] = {"path": str(value), "sha256": file_sha256(value)}
    if cfg.labeler.labels and Path(cfg.labeler.labels).is_file():
        manifest["inputs"]["labeler.labels"] = {
            "path": cfg.labeler.labels,
            "sha256": file_sha256(cfg.labeler.labels),
        }
    try:
        for name, fn in STAGES:
            kwargs = {"labeler": labeler} if name == "label" and labeler is not None else {}
            try:
                counters, elapsed = run_stage(name, fn, cfg, out, **kwargs)
            finally:
                _write_json(out / MANIFEST, manifest)
            manifest["stages"][name] = counters
            manifest["timings"][name] = elapsed
        _write_json(out / MANIFEST, manifest)
    finally:
        root.removeHandler(handler)
        root.setLevel(old_level)
        handler.close()
    return out
