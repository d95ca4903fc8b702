import json

import pytest

from cadgraph import cli, pipeline
from cadgraph.errors import ConfigError
from cadgraph.pipeline import PipelineConfig

from conftest import synth_case


@pytest.fixture(scope="module")
def case_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("case")
    synth_case("valve_gauge_direct").write(d)
    return d


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


def test_config_validation():
    with pytest.raises(ConfigError):
        PipelineConfig(epsilon=0.1, distance_cutoff=0.05)
    with pytest.raises(ConfigError):
        PipelineConfig(voxel_pitch=0)
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"epsilon": 0.01, "colour": "red"})
    cfg = PipelineConfig.from_dict({"labeler": {"kind": "none"}})
    assert cfg.labeler.kind == "none"
    assert PipelineConfig.from_dict(cfg.to_dict()) == cfg


def test_run_all_is_reproducible(case_dir, tmp_path):
    outs = []
    for k in range(2):
        cfg = PipelineConfig(input=str(case_dir / "scene.json"), gt_labels=str(case_dir / "gt_labels.json"),
                             out_dir=str(tmp_path / f"run{k}"))
        outs.append(pipeline.run_all(cfg))
    for name in ["scene.json", "groups.json", "clusters.json", "graph.json", "graph.dot", "labels.json",
                 "graph_labeled.json", "functional.json", "functional.dot", "report.json"]:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name
    manifest = json.loads((outs[0] / "manifest.json").read_text())
    assert manifest["config"]["epsilon"] == 0.01
    assert len(manifest["inputs"]["input"]["sha256"]) == 64
    assert set(manifest["timings"]) == {s for s, _ in pipeline.STAGES}
    log = [json.loads(l) for l in (outs[0] / "log.jsonl").read_text().splitlines()]
    assert [e["stage"] for e in log if e.get("event") == "done"] == [s for s, _ in pipeline.STAGES]


def test_stages_run_one_by_one(case_dir, tmp_path):
    out = tmp_path / "steps"
    assert run_cli("ingest", "--input", case_dir / "scene.json", "--out-dir", out) == 0
    assert run_cli("preprocess", "--out-dir", out) == 0
    assert run_cli("group", "--vthresh", 1e-6, "--rmax", 0.1, "--out-dir", out) == 0
    assert run_cli("cluster", "--epsilon", 0.01, "--min-samples", 1, "--out-dir", out) == 0
    assert run_cli("graph", "--out-dir", out, "--dot", tmp_path / "g.dot") == 0
    assert run_cli("label", "--labeler", "file", "--labels", case_dir / "gt_labels.json", "--out-dir", out) == 0
    assert run_cli("functional", "--out-dir", out, "--out", tmp_path / "f.json",
                   "--unit-groups", "Valve assembly,Gauge,Tank,Pump Unit") == 0
    whole = pipeline.run_all(PipelineConfig(input=str(case_dir / "scene.json"), out_dir=str(tmp_path / "whole"),
                                            labeler=pipeline.LabelerConfig(labels=str(case_dir / "gt_labels.json"))))
    assert (tmp_path / "f.json").read_bytes() == (whole / "functional.json").read_bytes()
    assert (tmp_path / "g.dot").read_text() == (whole / "graph.dot").read_text()
    assert run_cli("eval", "--pred", out / "labels.json", "--gt", case_dir / "gt_labels.json",
                   "--units", case_dir / "gt_units.json", "--scene", out / "scene.json",
                   "--out", tmp_path / "r.json") == 0
    report = json.loads((tmp_path / "r.json").read_text())
    assert report["group_accuracy_display"] == "100.0%"


def test_render_command(case_dir, tmp_path):
    out = tmp_path / "r"
    pipeline.run_all(PipelineConfig(input=str(case_dir / "scene.json"), out_dir=str(out),
                                    labeler=pipeline.LabelerConfig(kind="none")))
    assert run_cli("render", "--mesh", "/plant/run00/valve_00/body", "--out-dir", out, "--images", tmp_path / "img") == 0
    assert len(list((tmp_path / "img").glob("*.png"))) == 6


def test_noise_groups_become_singleton_clusters(case_dir, tmp_path):
    cfg = PipelineConfig(input=str(case_dir / "scene.json"), out_dir=str(tmp_path / "n"), min_samples=5,
                         labeler=pipeline.LabelerConfig(kind="none"))
    out = pipeline.run_all(cfg)
    clusters = json.loads((out / "clusters.json").read_text())
    graph = json.loads((out / "graph.json").read_text())
    cluster_nodes = [n for n in graph["nodes"] if n["kind"] == "CLUSTER"]
    assert len(cluster_nodes) == len(clusters["clusters"]) + len(clusters["noise"])
    assert clusters["noise"]


def test_exit_codes(tmp_path, case_dir):
    assert run_cli("run-all", "--input", tmp_path / "missing.json", "--out-dir", tmp_path / "o") == 3
    assert (tmp_path / "o" / "manifest.json").exists()
    assert run_cli("cluster", "--epsilon", 0.2, "--out-dir", tmp_path / "o") == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run_cli("run-all", "--config", bad) == 2
    assert run_cli("synth", "--out-dir", tmp_path / "s") == 2


def test_config_file_and_flag_override(tmp_path, case_dir):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"input": str(case_dir / "scene.json"), "epsilon": 0.02,
                                "labeler": {"kind": "none"}, "out_dir": str(tmp_path / "x")}))
    assert run_cli("run-all", "--config", conf, "--out-dir", tmp_path / "y") == 0
    manifest = json.loads((tmp_path / "y" / "manifest.json").read_text())
    assert manifest["config"]["epsilon"] == 0.02
    assert manifest["config"]["out_dir"] == str(tmp_path / "y")


def test_synth_command(tmp_path):
    assert run_cli("synth", "--suite", "adversarial", "--out-dir", tmp_path / "adv") == 0
    assert (tmp_path / "adv" / "gap_12mm_bridged" / "gt_clusters.json").exists()
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"runs": [{"waypoints": [[0, 0, 0.6], [2, 0, 0.6]]}],
                                "attachments": [{"type": "valve", "run": 0, "t": 0.3}, {"type": "gauge", "run": 0, "t": 0.7}]}))
    assert run_cli("synth", "--spec", spec, "--out-dir", tmp_path / "one") == 0
    fg = json.loads((tmp_path / "one" / "gt_functional.json").read_text())
    assert fg["edges"] == [[1, 2]]
