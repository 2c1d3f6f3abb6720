"""Four-stage experiment: data -> features -> per-stage split -> nine models -> reports."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import forest as F
from . import numcore as nc
from .baselines import BASELINE_NAMES, make_baseline
from .dataset import Cohort, SyntheticCohortSpec, generate_synthetic, load_cohort
from .errors import RuntimeFailure, StageError, ValidationError
from .metrics import ClassificationReport, ConfusionMatrix, confusion_matrix, report
from .modelio import canonical_json, dumps_model, sha256_text
from .ndt import TreeConfig
from .preprocess import (
    DEFAULT_THRESHOLD,
    DesignMatrix,
    Stage,
    encode_features,
    rescale_with_train_stats,
    select_by_frequency,
    stage_view,
    stratified_split,
)

log = logging.getLogger(__name__)

MODEL_NAMES = (*BASELINE_NAMES, "dndt", "dndf")
DISPLAY_NAMES = {
    "gnb": "Gaussian NB",
    "knn": "KNN",
    "logreg": "Logistic Regression",
    "cart": "Decision Tree",
    "rf": "Random Forest",
    "svm": "SVM",
    "adaboost": "AdaBoost",
    "dndt": "Deep Neural Decision Tree",
    "dndf": "Deep Neural Decision Forest",
}
STAGE_TITLES = {
    "s1": "all selected features",
    "s2": "without test result and confirmation method",
    "s3": "clinical confirmation only",
    "s4": "RT-PCR confirmation only",
}
FOREST_KEYS = ("num_trees", "depth", "used_features_rate", "batch_size", "epochs", "learning_rate")


@dataclass(frozen=True)
class ExperimentConfig:
    data_path: str | None = None
    synthetic: SyntheticCohortSpec = field(default_factory=SyntheticCohortSpec)
    stages: tuple = ("s1", "s2", "s3", "s4")
    models: tuple = MODEL_NAMES
    seed: int = 7
    test_fraction: float = 0.2
    selection_threshold: float = DEFAULT_THRESHOLD
    dndf: dict = field(default_factory=dict)
    dndt: dict = field(default_factory=dict)
    baselines: dict = field(default_factory=dict)
    out_dir: str | None = None

    def __post_init__(self):
        stages = tuple(Stage.parse(s).value for s in self.stages)
        object.__setattr__(self, "stages", tuple(s.value for s in Stage if s.value in stages))
        models = tuple(self.models)
        unknown = [m for m in models if m not in MODEL_NAMES]
        if unknown:
            raise ValidationError(f"unknown models {unknown}; choose from {MODEL_NAMES}")
        object.__setattr__(self, "models", tuple(m for m in MODEL_NAMES if m in models))
        if not self.stages:
            raise ValidationError("select at least one stage")
        if not self.models:
            raise ValidationError("select at least one model")
        if self.seed < 0:
            raise ValidationError("seed must be non-negative")
        for key in ("dndf", "dndt"):
            bad = set(getattr(self, key)) - set(FOREST_KEYS)
            if bad:
                raise ValidationError(f"unknown {key} overrides {sorted(bad)}; allowed {FOREST_KEYS}")
        bad = set(self.baselines) - set(BASELINE_NAMES)
        if bad:
            raise ValidationError(f"unknown baseline override keys {sorted(bad)}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stages"] = list(self.stages)
        d["models"] = list(self.models)
        d["synthetic"]["rare_symptom_columns"] = [list(x) for x in self.synthetic.rare_symptom_columns]
        d["synthetic"]["flag_rates"] = [list(x) for x in self.synthetic.flag_rates]
        return d

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        data = dict(data or {})
        allowed = {f.name for f in fields(cls)}
        unknown = set(data) - allowed
        if unknown:
            raise ValidationError(f"unknown config keys {sorted(unknown)}")
        if "synthetic" in data:
            syn = data["synthetic"] or {}
            if not isinstance(syn, dict):
                raise ValidationError("'synthetic' must be a mapping")
            try:
                data["synthetic"] = SyntheticCohortSpec(**syn)
            except TypeError as exc:
                raise ValidationError(f"bad synthetic spec: {exc}") from None
        everything = {"stages": tuple(s.value for s in Stage), "models": MODEL_NAMES}
        for key, full in everything.items():
            if isinstance(data.get(key), str):
                data[key] = full if data[key] == "all" else (data[key],)
        return cls(**data)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ValidationError(f"config is not valid YAML: {exc}") from None
    if data is not None and not isinstance(data, dict):
        raise ValidationError("config root must be a mapping")
    return ExperimentConfig.from_mapping(data or {})


def forest_config(cfg: ExperimentConfig, name: str, n_features: int) -> F.ForestConfig:
    """Default forest settings for ``dndf``; a single full-mask tree for ``dndt``."""
    if name == "dndf":
        base = {"num_trees": 25, "depth": 10, "used_features_rate": 0.5,
                "batch_size": 16, "epochs": 30, "learning_rate": 0.001}
    else:
        base = {"num_trees": 1, "depth": 10, "used_features_rate": 1.0,
                "batch_size": 16, "epochs": 30, "learning_rate": 0.001}
    base.update(getattr(cfg, name))
    return F.ForestConfig(
        num_trees=int(base["num_trees"]),
        tree=TreeConfig(depth=int(base["depth"]), used_features_rate=float(base["used_features_rate"]),
                        n_features=n_features, seed=cfg.seed),
        batch_size=int(base["batch_size"]),
        epochs=int(base["epochs"]),
        adam=nc.AdamConfig(learning_rate=float(base["learning_rate"])),
        seed=cfg.seed,
    )


# --- data -------------------------------------------------------------------

def load_data(cfg: ExperimentConfig) -> tuple:
    """Return ``(cohort, input_digest)``."""
    if cfg.data_path:
        path = Path(cfg.data_path)
        cohort = load_cohort(path)
        return cohort, sha256_text(path.read_text(encoding="utf-8"))
    cohort = generate_synthetic(cfg.synthetic)
    return cohort, sha256_text(cohort.to_csv())


def design_matrix(cfg: ExperimentConfig, cohort: Cohort) -> DesignMatrix:
    schema = select_by_frequency(cohort, cfg.selection_threshold)
    return encode_features(cohort, schema)


# --- stages -----------------------------------------------------------------

@dataclass
class StageResult:
    stage: str
    n_rows: int
    n_train: int
    n_test: int
    class_counts: dict
    features: list
    reports: dict  # model -> ClassificationReport
    confusion: dict  # model -> ConfusionMatrix
    seconds: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    forests: dict = field(default_factory=dict)


def _fit_predict(cfg, name, train, test):
    if name in ("dndt", "dndf"):
        fc = forest_config(cfg, name, train.n_cols)
        model = F.train(F.init_forest(fc), train.X, train.y)
        return F.predict(model, test.X), model
    model = make_baseline(name, cfg.seed)
    for key, value in cfg.baselines.get(name, {}).items():
        if not hasattr(model, key):
            raise ValidationError(f"baseline {name!r} has no parameter {key!r}")
        setattr(model, key, value)
    try:
        return model.fit(train.X, train.y).predict(test.X), None
    except ValidationError:
        raise
    except RuntimeFailure as exc:
        raise StageError(f"{name}: {exc}") from exc


def run_stage(cfg: ExperimentConfig, stage, dm: DesignMatrix | None = None) -> StageResult:
    stage = Stage.parse(stage)
    if dm is None:
        cohort, _ = load_data(cfg)
        dm = design_matrix(cfg, cohort)
    view = stage_view(dm, stage)
    counts = view.class_counts()
    if min(counts.values()) < 2:
        raise StageError(f"stage {stage.value}: class counts {counts} cannot be split "
                         "into a two-class training set")
    split = rescale_with_train_stats(stratified_split(view, cfg.test_fraction, cfg.seed))
    if min(split.train.class_counts().values()) < 1:
        raise StageError(f"stage {stage.value}: single-class training set {split.train.class_counts()}")

    result = StageResult(stage.value, view.n_rows, split.train.n_rows, split.test.n_rows, counts,
                         view.schema.names, {}, {})
    result.seeds = {"split": cfg.seed, "models": cfg.seed}
    for name in cfg.models:
        t0 = time.perf_counter()
        pred, model = _fit_predict(cfg, name, split.train, split.test)
        result.seconds[name] = time.perf_counter() - t0
        cm = confusion_matrix(split.test.y, pred)
        result.confusion[name] = cm
        result.reports[name] = report(cm)
        if model is not None:
            result.forests[name] = model
        log.info("stage %s %-8s acc=%.3f (%.1fs)", stage.value, name,
                 result.reports[name].accuracy, result.seconds[name])
    return result


# --- reports ----------------------------------------------------------------

def structured_results(results) -> dict:
    return {
        "stages": [
            {
                "stage": r.stage,
                "n_rows": r.n_rows,
                "n_train": r.n_train,
                "n_test": r.n_test,
                "class_counts": {str(k): v for k, v in r.class_counts.items()},
                "features": list(r.features),
                "seeds": dict(r.seeds),
                "models": {
                    name: {"metrics": r.reports[name].to_dict(), "confusion": r.confusion[name].to_dict()}
                    for name in r.reports
                },
            }
            for r in results
        ]
    }


def _model_order(models: dict) -> list:
    rank = {name: i for i, name in enumerate(MODEL_NAMES)}
    return sorted(models.items(), key=lambda kv: (rank.get(kv[0], len(rank)), kv[0]))


def render_text(structured: dict) -> str:
    lines = []
    for st in structured["stages"]:
        title = STAGE_TITLES.get(st["stage"], "")
        lines.append(f"Stage {st['stage'].upper()}: {title} "
                     f"(rows {st['n_rows']}, train {st['n_train']}, test {st['n_test']})")
        lines.append(f"{'Model name':<30}{'Accuracy':>10}{'Recall':>10}{'Precision':>11}{'F1-score':>10}")
        for name, entry in _model_order(st["models"]):
            m = entry["metrics"]
            lines.append(f"{DISPLAY_NAMES.get(name, name):<30}{m['accuracy']:>10.3f}{m['recall']:>10.3f}"
                         f"{m['precision']:>11.3f}{m['f1']:>10.3f}")
        lines.append("Confusion matrices, actual x predicted [[TN, FP], [FN, TP]]:")
        for name, entry in _model_order(st["models"]):
            c = entry["confusion"]
            lines.append(f"  {DISPLAY_NAMES.get(name, name):<28}[[{c['tn']}, {c['fp']}], [{c['fn']}, {c['tp']}]]")
        lines.append("")
    return "\n".join(lines)


def emit_report(results) -> tuple:
    """Return ``(text, structured)`` for a list of :class:`StageResult`."""
    structured = structured_results(results)
    return render_text(structured), structured


def results_from_structured(structured: dict) -> list:
    """Rebuild metric-only StageResults from the structured mirror."""
    out = []
    for st in structured["stages"]:
        cms = {n: ConfusionMatrix(**e["confusion"]) for n, e in st["models"].items()}
        out.append(StageResult(
            st["stage"], st["n_rows"], st["n_train"], st["n_test"],
            {int(k): v for k, v in st["class_counts"].items()}, st["features"],
            {n: report(cm) for n, cm in cms.items()}, cms, {}, dict(st["seeds"]),
        ))
    return out


# --- full run ---------------------------------------------------------------

@dataclass
class RunManifest:
    config: dict
    version: str
    input_digest: str
    stages: dict
    outputs: dict
    failures: dict

    def to_dict(self) -> dict:
        return {
            "toolkit": "dndf",
            "version": self.version,
            "config": self.config,
            "input_sha256": self.input_digest,
            "stages": self.stages,
            "outputs": self.outputs,
            "failures": self.failures,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _pretty(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def run_all(cfg: ExperimentConfig, out_dir=None) -> tuple:
    """Run every selected stage in order and assemble the manifest.

    Files written under ``out_dir`` (when given): ``stage_<id>.json``,
    ``models/<stage>_<model>.json``, ``results.json``, ``report.txt``,
    ``manifest.json`` (written last) and ``timings.json``. Everything except
    the timings is a pure function of the config and input data.
    """
    out_dir = Path(out_dir) if out_dir is not None else (Path(cfg.out_dir) if cfg.out_dir else None)
    cohort, input_digest = load_data(cfg)
    dm = design_matrix(cfg, cohort)

    results, failures = [], {}
    error = None
    for stage in cfg.stages:
        try:
            results.append(run_stage(cfg, stage, dm))
        except (StageError, RuntimeFailure) as exc:
            failures[stage] = str(exc)
            error = exc
            break

    text, structured = emit_report(results)
    files = {}
    stages = {}
    for r, st in zip(results, structured["stages"]):
        name = f"stage_{r.stage}.json"
        files[name] = _pretty(st)
        entry = {"result": name, "models": {}}
        for model_name, model in r.forests.items():
            mname = f"models/{r.stage}_{model_name}.json"
            files[mname] = dumps_model(model)
            entry["models"][model_name] = mname
        stages[r.stage] = entry
    files["results.json"] = _pretty(structured)
    files["report.txt"] = text
    config = cfg.to_dict()
    config.pop("out_dir")  # where the files land must not change their digests
    manifest = RunManifest(
        config=config,
        version=__version__,
        input_digest=input_digest,
        stages=stages,
        outputs={name: sha256_text(body) for name, body in sorted(files.items())},
        failures=failures,
    )

    if out_dir is not None:
        (out_dir / "models").mkdir(parents=True, exist_ok=True)
        for name, body in files.items():
            (out_dir / name).write_text(body, encoding="utf-8")
        timings = {r.stage: r.seconds for r in results}
        (out_dir / "timings.json").write_text(_pretty(timings), encoding="utf-8")
        (out_dir / "manifest.json").write_text(manifest.dumps(), encoding="utf-8")
    if error is not None:
        raise error
    return results, manifest


def config_digest(cfg: ExperimentConfig) -> str:
    return sha256_text(canonical_json(cfg.to_dict()))
