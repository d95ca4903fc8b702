import random
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cadgraph.errors import EmptyScope
from cadgraph.evaluation import (
    OTHERS,
    accuracy_counts,
    evaluate,
    format_percent,
    label_accuracy,
    label_distribution,
    unit_detection_report,
)

import table_fixture


def test_table_fixture_counts():
    pred, gt, units = table_fixture.build()
    assert accuracy_counts(pred, gt) == (67, 139, 174)
    report = evaluate(pred, gt, units).to_dict()
    assert report["group_accuracy_display"] == "79.9%"
    assert report["name_accuracy_display"] == "38.5%"
    assert report["unit_detection"]["Valve assembly"] == {"fully": 5, "partially": 7, "missed": 0}
    assert report["unit_detection"]["Gauge"] == {"fully": 12, "partially": 0, "missed": 0}


@pytest.mark.parametrize(
    "value, text",
    [(Fraction(139, 174), "79.9%"), (Fraction(67, 174), "38.5%"), (Fraction(1, 8), "12.5%"),
     (Fraction(1, 2000), "0.1%"), (Fraction(1, 2001), "0.0%"), (1, "100.0%"), (0.25, "25.0%")],
)
def test_half_up_rounding(value, text):
    assert format_percent(value) == text


def test_missing_predictions_count_as_wrong():
    gt = {"/a": {"group": "G", "name": "n"}, "/b": {"group": "G", "name": "m"}}
    assert label_accuracy({"/a": {"group": "G", "name": "x"}}, gt) == (0.0, 0.5)
    with pytest.raises(EmptyScope):
        label_accuracy({}, gt, scope=[])


labels = st.tuples(st.sampled_from("ABC"), st.sampled_from("xyz"))


@given(st.dictionaries(st.sampled_from([f"/m{i}" for i in range(30)]), st.tuples(labels, labels), min_size=1))
def test_name_accuracy_never_exceeds_group_accuracy(pairs):
    pred = {p: {"group": a[0], "name": a[1]} for p, (a, _) in pairs.items()}
    gt = {p: {"group": b[0], "name": b[1]} for p, (_, b) in pairs.items()}
    name, group = label_accuracy(pred, gt)
    assert name <= group
    scope = list(gt)
    random.Random(0).shuffle(scope)
    assert label_accuracy(pred, gt, scope) == (name, group)


def test_detection_partitions_units():
    units = [("Gauge", ["/a", "/b"]), ("Gauge", ["/c"]), ("Valve assembly", ["/d"])]
    pred = {"/a": {"group": "Gauge", "name": "x"}, "/c": {"group": "Gauge", "name": "x"}}
    report = unit_detection_report(pred, units)
    assert report == {
        "Gauge": {"fully": 1, "partially": 1, "missed": 0},
        "Valve assembly": {"fully": 0, "partially": 0, "missed": 1},
    }


def test_distribution_folds_rare_names():
    labs = {f"/p{i}": {"group": "Pipe assembly", "name": "Straight pipe"} for i in range(25)}
    labs.update({f"/v{i}": {"group": "Valve assembly", "name": "Gate valve"} for i in range(24)})
    dist = label_distribution(labs, threshold=25)
    assert dist["buckets"] == {"Straight pipe": 25, OTHERS: 24}
    assert dist["total"] == 49 == sum(dist["buckets"].values())
    assert dist["distinct_groups"] == 2
    one = label_distribution({"/x": {"group": "G", "name": "n"}}, threshold=1)
    assert one["buckets"] == {"n": 1}
