"""Cohort -> design matrix: feature selection, encoding, stage views, splits."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .dataset import FLAG_FIELDS, Cohort
from .errors import EmptyInputError, SchemaError, StratificationError, ValidationError

DEFAULT_THRESHOLD = 0.1

# Canonical column order; the first three are never subject to frequency selection.
ALWAYS_KEPT = ("test_result", "confirmation_method", "age")
CORE_FEATURES = (*ALWAYS_KEPT, *FLAG_FIELDS)


@dataclass(frozen=True)
class Column:
    name: str
    kind: str  # "continuous" | "binary"
    source: str


@dataclass(frozen=True)
class FeatureSchema:
    columns: tuple
    selection_threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate column names in {names}")
        for c in self.columns:
            if c.kind not in ("continuous", "binary"):
                raise SchemaError(f"column {c.name!r} has unknown kind {c.kind!r}", c.name)

    @property
    def names(self) -> list:
        return [c.name for c in self.columns]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise SchemaError(f"column {name!r} not in schema", name) from None

    def without(self, names) -> "FeatureSchema":
        drop = set(names)
        return FeatureSchema(tuple(c for c in self.columns if c.name not in drop),
                             self.selection_threshold)


def _column(name: str) -> Column:
    if name == "age":
        return Column("age", "continuous", "age")
    if name in ALWAYS_KEPT or name in FLAG_FIELDS:
        return Column(name, "binary", name)
    return Column(name, "binary", f"extra_symptoms.{name}")


def core_schema(threshold: float = DEFAULT_THRESHOLD) -> FeatureSchema:
    return FeatureSchema(tuple(_column(n) for n in CORE_FEATURES), threshold)


@dataclass
class DesignMatrix:
    X: np.ndarray
    y: np.ndarray
    schema: FeatureSchema
    row_ids: tuple

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.row_ids = tuple(self.row_ids)
        if self.X.ndim != 2 or self.X.shape[1] != len(self.schema.columns):
            raise SchemaError(f"X of shape {self.X.shape} vs {len(self.schema.columns)} schema columns")
        if not (self.X.shape[0] == self.y.shape[0] == len(self.row_ids)):
            raise SchemaError("X, y and row_ids disagree on row count")

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_cols(self) -> int:
        return self.X.shape[1]

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.schema.index(name)]

    def take_rows(self, rows) -> "DesignMatrix":
        rows = np.asarray(rows, dtype=np.int64)
        return DesignMatrix(self.X[rows], self.y[rows], self.schema,
                            tuple(self.row_ids[i] for i in rows))

    def class_counts(self) -> dict:
        return {k: int((self.y == k).sum()) for k in (0, 1)}

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["id", *self.schema.names, "label"])
            for rid, row, label in zip(self.row_ids, self.X, self.y):
                writer.writerow([rid, *(repr(float(v)) for v in row), int(label)])


@dataclass
class SplitResult:
    train: DesignMatrix
    test: DesignMatrix
    seed: int
    test_fraction: float


def normalize_age(values, lo=None, hi=None) -> list:
    """Min-max scale into [0, 1]. A degenerate range maps everything to 0.

    ``lo``/``hi`` override the statistics (e.g. to reuse training ones);
    values outside them are clipped.
    """
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise EmptyInputError("normalize_age needs at least one value")
    lo = arr.min() if lo is None else float(lo)
    hi = arr.max() if hi is None else float(hi)
    if hi == lo:
        return [0.0] * arr.size
    return np.clip((arr - lo) / (hi - lo), 0.0, 1.0).tolist()


def select_by_frequency(c: Cohort, threshold: float = DEFAULT_THRESHOLD) -> FeatureSchema:
    """Keep the always-on columns plus every flag whose prevalence is >= threshold."""
    if len(c) == 0:
        raise EmptyInputError("cannot select features on an empty cohort")
    n = len(c)
    kept = list(ALWAYS_KEPT)
    for name in (*FLAG_FIELDS, *c.extra_columns):
        count = sum(1 for r in c if r.flag(name))
        if count / n >= threshold:
            kept.append(name)
    return FeatureSchema(tuple(_column(name) for name in kept), threshold)


def _field_value(record, col: Column):
    if col.name == "test_result":
        return 1.0 if record.test_result == "positive" else 0.0
    if col.name == "confirmation_method":
        return 1.0 if record.confirmation_method == "clinical" else 0.0
    if col.source.startswith("extra_symptoms."):
        name = col.source.split(".", 1)[1]
        if name not in record.extra_symptoms:
            raise SchemaError(f"record {record.id} lacks field {name!r}", name)
        return 1.0 if record.extra_symptoms[name] else 0.0
    if not hasattr(record, col.source):
        raise SchemaError(f"record {record.id} lacks field {col.source!r}", col.source)
    return 1.0 if getattr(record, col.source) else 0.0


def encode_features(c: Cohort, schema: FeatureSchema) -> DesignMatrix:
    """One 0/1 column per two-valued field, min-max scaled age, y = deceased."""
    if len(c) == 0:
        raise EmptyInputError("cannot encode an empty cohort")
    X = np.zeros((len(c), len(schema.columns)))
    for j, col in enumerate(schema.columns):
        if col.kind == "continuous":
            X[:, j] = normalize_age([getattr(r, col.source) for r in c])
        else:
            X[:, j] = [_field_value(r, col) for r in c]
    y = np.array([1 if r.outcome == "deceased" else 0 for r in c], dtype=np.int64)
    return DesignMatrix(X, y, schema, tuple(r.id for r in c))


class Stage(str, Enum):
    S1 = "s1"
    S2 = "s2"
    S3 = "s3"
    S4 = "s4"

    @classmethod
    def parse(cls, value) -> "Stage":
        if isinstance(value, Stage):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValidationError(f"unknown stage {value!r}; expected one of s1..s4") from None


def stage_view(dm: DesignMatrix, stage) -> DesignMatrix:
    stage = Stage.parse(stage)
    if stage is Stage.S1:
        return dm
    if stage is Stage.S2:
        keep = [j for j, name in enumerate(dm.schema.names)
                if name not in ("test_result", "confirmation_method")]
        return DesignMatrix(dm.X[:, keep], dm.y, dm.schema.without(["test_result", "confirmation_method"]),
                            dm.row_ids)
    method = dm.column("confirmation_method")
    wanted = 1.0 if stage is Stage.S3 else 0.0
    return dm.take_rows(np.flatnonzero(method == wanted))


def _allocate(counts, total):
    """Largest-remainder allocation of ``total`` test rows across classes."""
    n = sum(counts)
    quotas = [k * total / n for k in counts]
    alloc = [math.floor(q) for q in quotas]
    order = sorted(range(len(counts)), key=lambda i: (-(quotas[i] - alloc[i]), i))
    for i in order[: total - sum(alloc)]:
        alloc[i] += 1
    return alloc


def stratified_split(dm: DesignMatrix, test_fraction: float = 0.2, seed: int = 0) -> SplitResult:
    """Class-stratified split; test size is ``ceil(n * test_fraction)``.

    Test rows are apportioned to classes by largest remainder, so each class
    is within one row of its exact share. Rows keep their original order in
    both partitions.
    """
    if not 0 < test_fraction < 1:
        raise ValidationError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    counts = dm.class_counts()
    small = {k: v for k, v in counts.items() if v < 2}
    if small:
        raise StratificationError(f"classes with fewer than 2 rows: {small}")
    n = dm.n_rows
    total = math.ceil(n * test_fraction - 1e-9)
    alloc = _allocate([counts[0], counts[1]], total)
    rng = np.random.default_rng(seed)
    test_rows = []
    for k in (0, 1):
        rows = np.flatnonzero(dm.y == k)
        test_rows.extend(rows[rng.permutation(rows.size)[: alloc[k]]].tolist())
    test_mask = np.zeros(n, dtype=bool)
    test_mask[test_rows] = True
    return SplitResult(dm.take_rows(np.flatnonzero(~test_mask)),
                       dm.take_rows(np.flatnonzero(test_mask)), seed, test_fraction)


def rescale_with_train_stats(split: SplitResult) -> SplitResult:
    """Re-apply min-max scaling to continuous columns using training statistics.

    Min-max is affine, so rescaling an already scaled column equals scaling the
    raw values with the training range. Test values are clipped to [0, 1].
    """
    train_X = split.train.X.copy()
    test_X = split.test.X.copy()
    for j, col in enumerate(split.train.schema.columns):
        if col.kind != "continuous":
            continue
        lo, hi = train_X[:, j].min(), train_X[:, j].max()
        train_X[:, j] = normalize_age(train_X[:, j], lo, hi)
        if test_X.shape[0]:
            test_X[:, j] = normalize_age(test_X[:, j], lo, hi)
    return replace(
        split,
        train=replace(split.train, X=train_X),
        test=replace(split.test, X=test_X),
    )
