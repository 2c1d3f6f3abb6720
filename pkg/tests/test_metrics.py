from fractions import Fraction

import numpy as np
import pytest

from dndf.errors import ValidationError
from dndf.metrics import ConfusionMatrix, confusion_matrix, evaluate, report, report_exact


def test_confusion_examples():
    assert confusion_matrix([1], [1]) == ConfusionMatrix(0, 0, 0, 1)
    assert confusion_matrix([0, 1], [1, 0]) == ConfusionMatrix(0, 1, 1, 0)
    y = np.array([0, 1, 1, 0, 1])
    cm = confusion_matrix(y, y)
    assert cm.fp == cm.fn == 0 and cm.total == 5


def test_confusion_validation():
    with pytest.raises(ValidationError):
        confusion_matrix([0, 1], [1])
    with pytest.raises(ValidationError):
        confusion_matrix([0, 2], [0, 1])
    with pytest.raises(ValidationError):
        ConfusionMatrix(-1, 0, 0, 0)


def test_reference_matrix():
    r = report(ConfusionMatrix(tn=405, fp=31, fn=96, tp=43))
    assert [round(v, 3) for v in r.row()] == [0.779, 0.779, 0.753, 0.753]


def test_hand_computed_weighted_values():
    # class 0: P = 405/501, R = 405/436; class 1: P = 43/74, R = 43/139
    ex = report_exact(ConfusionMatrix(405, 31, 96, 43))
    p0, r0, p1, r1 = Fraction(405, 501), Fraction(405, 436), Fraction(43, 74), Fraction(43, 139)
    assert ex["precision"] == (p0 * 436 + p1 * 139) / 575
    f0, f1 = 2 * p0 * r0 / (p0 + r0), 2 * p1 * r1 / (p1 + r1)
    assert ex["f1"] == (f0 * 436 + f1 * 139) / 575


def test_accuracy_examples():
    assert round(float(Fraction(450, 575)), 3) == 0.783
    assert round(report(ConfusionMatrix(418, 0, 125, 32)).accuracy, 3) == 0.783
    assert round(report(ConfusionMatrix(140, 40, 27, 11)).accuracy, 3) == 0.693


def test_zero_denominators_are_zero():
    r = report(ConfusionMatrix(tn=5, fp=0, fn=3, tp=0))
    assert r.per_class[1].precision == 0.0 and r.per_class[1].f1 == 0.0


def test_empty_matrix():
    with pytest.raises(ValidationError):
        report(ConfusionMatrix(0, 0, 0, 0))


def test_weighted_recall_equals_accuracy(rng):
    for _ in range(500):
        tn, fp, fn, tp = (int(v) for v in rng.integers(0, 50, size=4))
        if tn + fp + fn + tp == 0:
            continue
        ex = report_exact(ConfusionMatrix(tn, fp, fn, tp))
        assert ex["recall"] == ex["accuracy"]
        for k, m in ex["per_class"].items():
            if m["precision"] + m["recall"]:
                assert m["f1"] == 2 * m["precision"] * m["recall"] / (m["precision"] + m["recall"])
        r = report(ConfusionMatrix(tn, fp, fn, tp))
        assert all(0.0 <= v <= 1.0 for v in r.row())


def test_evaluate_and_dict():
    cm, r = evaluate([0, 0, 1, 1], [0, 1, 1, 1])
    assert cm.as_rows() == [[1, 1], [0, 2]]
    d = r.to_dict()
    assert d["accuracy"] == 0.75 and d["per_class"]["1"]["support"] == 2
