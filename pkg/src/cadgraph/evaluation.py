"""Semantic accuracy, unit detection counts and label distributions."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Mapping

from .errors import EmptyScope

OTHERS = "Others"


def _pair(label) -> tuple[str, str] | None:
    if label is None:
        return None
    if isinstance(label, Mapping):
        return label.get("group"), label.get("name")
    return label.group, label.name


def accuracy_counts(
    pred: Mapping[str, Any], gt: Mapping[str, Any], scope: Iterable[str] | None = None
) -> tuple[int, int, int]:
    """(exact name matches, group matches, scope size)."""
    scope = sorted(set(gt) if scope is None else set(scope))
    if not scope:
        raise EmptyScope("accuracy over an empty scope")
    missing = [p for p in scope if p not in gt]
    if missing:
        raise ValueError(f"ground truth lacks {len(missing)} scoped paths, e.g. {missing[0]!r}")
    name_hits = group_hits = 0
    for path in scope:
        p, g = _pair(pred.get(path)), _pair(gt[path])
        if p is None:
            continue
        if p[0] == g[0]:
            group_hits += 1
            if p[1] == g[1]:
                name_hits += 1
    return name_hits, group_hits, len(scope)


def label_accuracy(pred, gt, scope=None) -> tuple[float, float]:
    """(name accuracy, group accuracy); missing predictions count as wrong."""
    name_hits, group_hits, n = accuracy_counts(pred, gt, scope)
    return name_hits / n, group_hits / n


def format_percent(value) -> str:
    """Percentage with one decimal, rounding halves up (79.885 -> "79.9%")."""
    frac = Fraction(value) if isinstance(value, (int, Fraction)) else Fraction(value).limit_denominator(10**9)
    tenths = math.floor(frac * 1000 + Fraction(1, 2))
    return f"{tenths // 10}.{tenths % 10}%"


def unit_detection_report(
    pred_labels: Mapping[str, Any], gt_units: Iterable
) -> dict[str, dict[str, int]]:
    """Fully / partially / missed counts per ground-truth unit type.

    A unit is fully found when every one of its meshes is predicted with the
    unit's group label, partially when some are, missed when none are.
    """
    out: dict[str, dict[str, int]] = {}
    for unit in gt_units:
        if isinstance(unit, Mapping):
            kind, meshes = unit["type"], unit["meshes"]
        else:
            kind, meshes = unit
        meshes = list(meshes)
        if not meshes:
            raise ValueError(f"ground-truth {kind} unit without meshes")
        hits = 0
        for m in meshes:
            p = _pair(pred_labels.get(m))
            hits += p is not None and p[0] == kind
        counts = out.setdefault(kind, {"fully": 0, "partially": 0, "missed": 0})
        if hits == len(meshes):
            counts["fully"] += 1
        elif hits:
            counts["partially"] += 1
        else:
            counts["missed"] += 1
    return out


def label_distribution(labels: Mapping[str, Any], threshold: int = 25, by: str = "name") -> dict:
    """Histogram of labels with rare categories folded into ``Others``.

    ``by`` selects the ``name`` or ``group`` label. Categories with fewer than
    ``threshold`` occurrences are folded. Group totals are always reported.
    """
    if by not in ("name", "group"):
        raise ValueError("by must be 'name' or 'group'")
    pairs = [_pair(l) for l in labels.values()]
    pairs = [p for p in pairs if p is not None]
    key = 1 if by == "name" else 0
    counts = Counter(p[key] for p in pairs)
    buckets: Counter = Counter()
    for cat, n in counts.items():
        buckets[cat if n >= threshold else OTHERS] += n
    ordered = sorted(buckets.items(), key=lambda kv: (kv[0] == OTHERS, -kv[1], kv[0]))
    groups = Counter(p[0] for p in pairs)
    return {
        "total": len(pairs),
        "threshold": threshold,
        "by": by,
        "buckets": dict(ordered),
        "groups": dict(sorted(groups.items(), key=lambda kv: (-kv[1], kv[0]))),
        "distinct_groups": len(groups),
        "distinct_names": len({p[1] for p in pairs}),
    }


@dataclass
class EvalReport:
    name_accuracy: float
    group_accuracy: float
    scope_size: int
    name_matches: int
    group_matches: int
    unit_detection: dict[str, dict[str, int]] = field(default_factory=dict)
    distribution: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name_accuracy": self.name_accuracy,
            "group_accuracy": self.group_accuracy,
            "name_accuracy_display": format_percent(Fraction(self.name_matches, self.scope_size)),
            "group_accuracy_display": format_percent(Fraction(self.group_matches, self.scope_size)),
            "scope_size": self.scope_size,
            "name_matches": self.name_matches,
            "group_matches": self.group_matches,
            "unit_detection": self.unit_detection,
            "distribution": self.distribution,
        }


def evaluate(pred, gt, gt_units=(), scope=None, threshold: int = 25) -> EvalReport:
    name_hits, group_hits, n = accuracy_counts(pred, gt, scope)
    return EvalReport(
        name_accuracy=name_hits / n,
        group_accuracy=group_hits / n,
        scope_size=n,
        name_matches=name_hits,
        group_matches=group_hits,
        unit_detection=unit_detection_report(pred, gt_units) if gt_units else {},
        distribution=label_distribution(pred, threshold),
    )
