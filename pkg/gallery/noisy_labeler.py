"""Score a deliberately unreliable labeler against ground truth.

A wrapper around the file labeler swaps some names for a wrong one in the
same group and, less often, moves a node to the wrong group. The evaluation
report then shows name accuracy falling faster than group accuracy, and the
unit detection table shows which valves were only partly recognised.

    python gallery/noisy_labeler.py
"""

import json
import random
import tempfile
from pathlib import Path

from cadgraph import FileLabeler, SemanticLabel, pipeline, synth
from cadgraph.labeling import Provenance
from cadgraph.pipeline import LabelerConfig, PipelineConfig


class NoisyLabeler:
    def __init__(self, table, seed=3, name_error=0.4, group_error=0.15):
        self.inner = FileLabeler(table)
        self.rng = random.Random(seed)
        self.name_error = name_error
        self.group_error = group_error

    def label(self, node, vocabulary):
        truth = self.inner.label(node, vocabulary)
        group, name = truth.group, truth.name
        if self.rng.random() < self.group_error:
            group = self.rng.choice(sorted(g for g in vocabulary.groups if g != group))
            name = vocabulary.groups[group][0]
        elif self.rng.random() < self.name_error:
            others = [n for n in vocabulary.groups.get(group, ()) if n != name]
            name = self.rng.choice(others) if others else name
        return SemanticLabel(group, name, Provenance.MODEL)


def main() -> None:
    out_dir = Path(tempfile.mkdtemp(prefix="cadgraph-noisy-"))
    case = synth.generate(synth.suite()["contested_corridor"])
    case_dir = case.write(out_dir / "case")
    table = json.loads((case_dir / "gt_labels.json").read_text())
    cfg = PipelineConfig(
        input=str(case_dir / "scene.json"),
        gt_labels=str(case_dir / "gt_labels.json"),
        gt_units=str(case_dir / "gt_units.json"),
        labeler=LabelerConfig(kind="none"),
        out_dir=str(out_dir / "run"),
    )
    out = pipeline.run_all(cfg, labeler=NoisyLabeler(table))
    report = json.loads((out / pipeline.REPORT).read_text())
    print(f"group accuracy {report['group_accuracy_display']}, name accuracy {report['name_accuracy_display']}")
    for group, counts in sorted(report["unit_detection"].items()):
        print(f"  {group:<15} {counts}")


if __name__ == "__main__":
    main()
