"""Confusion matrix and per-class / support-weighted classification metrics.

Class 1 (deceased) is the positive class. Metrics are computed as exact
fractions and converted to floats at the end; any per-class metric with a
zero denominator is 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class ConfusionMatrix:
    tn: int
    fp: int
    fn: int
    tp: int

    def __post_init__(self):
        for name in ("tn", "fp", "fn", "tp"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise ValidationError(f"{name} must be a non-negative integer, got {v}")
            object.__setattr__(self, name, int(v))

    @property
    def total(self) -> int:
        return self.tn + self.fp + self.fn + self.tp

    def as_rows(self):
        """Actual x predicted layout: [[tn, fp], [fn, tp]]."""
        return [[self.tn, self.fp], [self.fn, self.tp]]

    def to_dict(self) -> dict:
        return {"tn": self.tn, "fp": self.fp, "fn": self.fn, "tp": self.tp}


def confusion_matrix(y_true, y_pred) -> ConfusionMatrix:
    t = np.asarray(y_true)
    p = np.asarray(y_pred)
    if t.shape != p.shape or t.ndim != 1:
        raise ValidationError(f"label arrays differ in shape: {t.shape} vs {p.shape}")
    for arr, name in ((t, "y_true"), (p, "y_pred")):
        if not np.all((arr == 0) | (arr == 1)):
            raise ValidationError(f"{name} holds labels outside {{0, 1}}")
    t = t.astype(bool)
    p = p.astype(bool)
    return ConfusionMatrix(
        tn=int(np.sum(~t & ~p)),
        fp=int(np.sum(~t & p)),
        fn=int(np.sum(t & ~p)),
        tp=int(np.sum(t & p)),
    )


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class ClassificationReport:
    per_class: dict  # {0: ClassMetrics, 1: ClassMetrics}
    accuracy: float
    recall: float
    precision: float
    f1: float

    def row(self):
        """Accuracy, recall, precision, F1 in the order the result tables use."""
        return (self.accuracy, self.recall, self.precision, self.f1)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "recall": self.recall,
            "precision": self.precision,
            "f1": self.f1,
            "per_class": {
                str(k): {"precision": m.precision, "recall": m.recall, "f1": m.f1, "support": m.support}
                for k, m in self.per_class.items()
            },
        }


def _ratio(num, den) -> Fraction:
    return Fraction(num, den) if den else Fraction(0)


def _f1(p: Fraction, r: Fraction) -> Fraction:
    return 2 * p * r / (p + r) if p + r else Fraction(0)


def report_exact(cm: ConfusionMatrix) -> dict:
    """All metrics as :class:`fractions.Fraction` values."""
    if cm.total == 0:
        raise ValidationError("confusion matrix is empty")
    # class 0 treats "recovered" as the positive label
    per = {
        0: {"precision": _ratio(cm.tn, cm.tn + cm.fn), "recall": _ratio(cm.tn, cm.tn + cm.fp),
            "support": cm.tn + cm.fp},
        1: {"precision": _ratio(cm.tp, cm.tp + cm.fp), "recall": _ratio(cm.tp, cm.tp + cm.fn),
            "support": cm.tp + cm.fn},
    }
    for m in per.values():
        m["f1"] = _f1(m["precision"], m["recall"])
    total = cm.total

    def weighted(key):
        return sum(per[k][key] * per[k]["support"] for k in per) / total

    return {
        "per_class": per,
        "accuracy": Fraction(cm.tn + cm.tp, total),
        "recall": weighted("recall"),
        "precision": weighted("precision"),
        "f1": weighted("f1"),
    }


def report(cm: ConfusionMatrix) -> ClassificationReport:
    ex = report_exact(cm)
    per = {
        k: ClassMetrics(float(m["precision"]), float(m["recall"]), float(m["f1"]), m["support"])
        for k, m in ex["per_class"].items()
    }
    return ClassificationReport(per, float(ex["accuracy"]), float(ex["recall"]),
                                float(ex["precision"]), float(ex["f1"]))


def evaluate(y_true, y_pred) -> tuple:
    cm = confusion_matrix(y_true, y_pred)
    return cm, report(cm)
