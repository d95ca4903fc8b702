"""Command-line entry point: ``cadgraph <stage> [options]``.

Every subcommand accepts ``--config`` (a JSON PipelineConfig) and
``--out-dir``; explicit flags override the config file. Exit codes are 0 on
success, 2 on configuration errors and 3 when a stage fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .errors import CadgraphError, ConfigError, StageError
from .pipeline import PipelineConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3

logger = logging.getLogger("cadgraph.cli")


def _csv(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON pipeline configuration")
    p.add_argument("--out-dir", dest="out_dir", help="artifact directory")
    p.add_argument("--pitch", dest="voxel_pitch", type=float)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cadgraph", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load a scene and apply exclusions")
    _common(p)
    p.add_argument("--input")
    p.add_argument("--format", choices=["obj", "gltf", "json"])
    p.add_argument("--units")
    p.add_argument("--exclude", nargs="*")
    p.add_argument("--ground", nargs="*")
    p.add_argument("--out", help="scene JSON to write (default <out-dir>/scene.json)")

    p = sub.add_parser("preprocess", help="voxelized point counts per mesh")
    _common(p)
    p.add_argument("--fill-interior", dest="fill_interior", action="store_true", default=None)

    p = sub.add_parser("group", help="merge small meshes into nearby large ones")
    _common(p)
    p.add_argument("--vthresh", dest="volume_threshold", type=float)
    p.add_argument("--rmax", dest="proximity_r_max", type=float)

    p = sub.add_parser("cluster", help="DBSCAN over minimal group distances")
    _common(p)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--min-samples", dest="min_samples", type=int)
    p.add_argument("--cutoff", dest="distance_cutoff", type=float)

    p = sub.add_parser("graph", help="assemble the scene graph")
    _common(p)
    p.add_argument("--out", help="graph JSON path (default <out-dir>/graph.json)")
    p.add_argument("--dot", help="also write DOT here")

    p = sub.add_parser("render", help="write the six labeling snapshots of a mesh node")
    _common(p)
    p.add_argument("--mesh", required=True, help="representative path of the node")
    p.add_argument("--graph", help="graph JSON (default <out-dir>/graph.json)")
    p.add_argument("--scene", help="scene JSON (default <out-dir>/scene.json)")
    p.add_argument("--out-dir-images", "--images", dest="images", help="image directory")

    p = sub.add_parser("label", help="label every mesh node")
    _common(p)
    p.add_argument("--labeler", choices=["file", "remote", "none"])
    p.add_argument("--labels", help="label table for the file labeler")
    p.add_argument("--endpoint")
    p.add_argument("--model")
    p.add_argument("--vocabulary")
    p.add_argument("--max-attempts", dest="max_attempts", type=int)
    p.add_argument("--workers", dest="max_workers", type=int)

    p = sub.add_parser("functional", help="extract functional relations")
    _common(p)
    p.add_argument("--graph", help="labeled graph JSON (default <out-dir>/graph_labeled.json)")
    p.add_argument("--pipe-groups", dest="pipe_groups", type=_csv)
    p.add_argument("--unit-groups", dest="functional_groups", type=_csv)
    p.add_argument("--out", help="functional graph JSON path")
    p.add_argument("--dot", help="also write DOT here")

    p = sub.add_parser("eval", help="semantic accuracy and unit detection")
    _common(p)
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--units")
    p.add_argument("--scene", help="restrict the scope to active, non-ground meshes of this scene")
    p.add_argument("--threshold", type=int, default=25)
    p.add_argument("--out")

    p = sub.add_parser("synth", help="generate a synthetic scene with ground truth")
    p.add_argument("--spec", help="spec JSON file")
    p.add_argument("--suite", choices=["main", "adversarial"], help="write a bundled suite instead")
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("run-all", help="run every stage")
    _common(p)
    p.add_argument("--input")
    p.add_argument("--labels", help="label table for the file labeler")
    p.add_argument("--gt-labels", dest="gt_labels")
    p.add_argument("--gt-units", dest="gt_units")
    return parser


CONFIG_KEYS = {
    "input", "format", "units", "exclude", "ground", "voxel_pitch", "volume_threshold",
    "proximity_r_max", "epsilon", "min_samples", "distance_cutoff", "fill_interior",
    "pipe_groups", "functional_groups", "vocabulary", "gt_labels", "gt_units", "out_dir",
}
LABELER_KEYS = {"labels": "labels", "labeler": "kind", "endpoint": "endpoint", "model": "model",
                "max_attempts": "max_attempts", "max_workers": "max_workers"}


def config_from_args(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if getattr(args, "config", None) else PipelineConfig()
    values = vars(args)
    changes = {k: values[k] for k in CONFIG_KEYS if k in values and values[k] is not None}
    labeler = {LABELER_KEYS[k]: values[k] for k in LABELER_KEYS if values.get(k) is not None}
    try:
        return cfg.replace(**changes, labeler=labeler or None)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _out(cfg) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _copy(src: Path, dst: str | None) -> None:
    if dst and Path(dst).resolve() != src.resolve():
        Path(dst).write_bytes(src.read_bytes())


def cmd_stage(name):
    def run(args):
        cfg = config_from_args(args)
        out = _out(cfg)
        counters, _ = pipeline.run_stage(name, dict(pipeline.STAGES)[name], cfg, out)
        print(json.dumps(counters, sort_keys=True))
        return cfg, out

    return run


def cmd_ingest(args):
    cfg, out = cmd_stage("ingest")(args)
    _copy(out / pipeline.SCENE, args.out)


def cmd_graph(args):
    cfg, out = cmd_stage("graph")(args)
    _copy(out / pipeline.GRAPH, args.out)
    _copy(out / pipeline.GRAPH_DOT, args.dot)


def cmd_label(args):
    cmd_stage("label")(args)


def cmd_functional(args):
    cfg = config_from_args(args)
    out = _out(cfg)
    if args.graph:
        src = Path(args.graph)
        if src.resolve() != (out / pipeline.LABELED_GRAPH).resolve():
            (out / pipeline.LABELED_GRAPH).write_bytes(src.read_bytes())
    counters, _ = pipeline.run_stage("functional", pipeline.stage_functional, cfg, out)
    print(json.dumps(counters, sort_keys=True))
    _copy(out / pipeline.FUNCTIONAL, args.out)
    _copy(out / pipeline.FUNCTIONAL_DOT, args.dot)


def cmd_render(args):
    from .rendering import label_images, save_png
    from .scene_graph import deserialize
    from .scene_io import load_scene

    cfg = config_from_args(args)
    out = Path(cfg.out_dir)
    try:
        graph = deserialize(Path(args.graph or out / pipeline.GRAPH).read_bytes())
        scene = load_scene(args.scene or out / pipeline.SCENE)
        node = graph.node_by_path(args.mesh)
        images = label_images(scene, node)
    except (CadgraphError, OSError, KeyError) as exc:
        raise StageError("render", exc) from exc
    target = Path(args.images or out / "images")
    target.mkdir(parents=True, exist_ok=True)
    for i, img in enumerate(images):
        kind = "context" if i % 2 == 0 else "isolated"
        save_png(img, target / f"view{i // 2}_{kind}.png")
    print(json.dumps({"images": len(images), "dir": str(target)}))


def cmd_eval(args):
    from .evaluation import evaluate

    try:
        pred = pipeline.read_label_file(args.pred)
        gt = pipeline.read_label_file(args.gt)
        units = json.loads(Path(args.units).read_text()) if args.units else ()
        scope = None
        if args.scene:
            from .scene_io import load_scene

            scene = load_scene(args.scene)
            scope = [m.path for m in scene.meshes if m.active and not m.is_ground and m.path in gt]
        report = evaluate(pred, gt, units, scope, threshold=args.threshold).to_dict()
    except (CadgraphError, OSError, ValueError, KeyError) as exc:
        raise StageError("eval", exc) from exc
    text = json.dumps(report, sort_keys=True, indent=1) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    print(json.dumps({k: report[k] for k in ("group_accuracy_display", "name_accuracy_display", "scope_size")}))


def cmd_synth(args):
    from . import synth

    out = Path(args.out_dir)
    if args.suite:
        specs = synth.suite() if args.suite == "main" else synth.adversarial_suite()
    elif args.spec:
        try:
            doc = json.loads(Path(args.spec).read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read spec {args.spec}: {exc}") from exc
        specs = {None: synth.SynthSpec.from_dict(doc)}
    else:
        raise ConfigError("synth needs --spec or --suite")
    try:
        for name, spec in specs.items():
            synth.generate(spec).write(out / name if name else out)
    except CadgraphError as exc:
        raise StageError("synth", exc) from exc
    print(json.dumps({"cases": len(specs), "dir": str(out)}))


def cmd_run_all(args):
    cfg = config_from_args(args)
    out = pipeline.run_all(cfg)
    manifest = json.loads((out / pipeline.MANIFEST).read_text())
    print(json.dumps(manifest["stages"], sort_keys=True))


COMMANDS = {
    "ingest": cmd_ingest,
    "preprocess": lambda a: cmd_stage("preprocess")(a),
    "group": lambda a: cmd_stage("group")(a),
    "cluster": lambda a: cmd_stage("cluster")(a),
    "graph": cmd_graph,
    "render": cmd_render,
    "label": cmd_label,
    "functional": cmd_functional,
    "eval": cmd_eval,
    "synth": cmd_synth,
    "run-all": cmd_run_all,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    for handler in logging.getLogger().handlers:
        handler.setLevel(logging.INFO if args.verbose else logging.WARNING)
    try:
        COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except CadgraphError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
