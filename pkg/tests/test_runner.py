import json

import numpy as np
import pytest

from dndf import forest as F
from dndf.dataset import SyntheticCohortSpec
from dndf.errors import StageError, ValidationError
from dndf.metrics import ConfusionMatrix, report
from dndf.runner import (
    MODEL_NAMES,
    ExperimentConfig,
    StageResult,
    emit_report,
    forest_config,
    load_config,
    render_text,
    results_from_structured,
    run_all,
    run_stage,
)

FAST = {"num_trees": 3, "depth": 3, "epochs": 2}


def fast_config(**kw):
    base = dict(
        synthetic=SyntheticCohortSpec(n_total=300, n_clinical=180, seed=4),
        seed=4,
        dndf=FAST,
        dndt={"depth": 3, "epochs": 2},
        baselines={"rf": {"n_trees": 5}},
    )
    base.update(kw)
    return ExperimentConfig(**base)


def _stage_result(cm, models=("dndf",)):
    return StageResult("s2", 2875, 2300, 575, {0: 2270, 1: 605}, ["age"],
                       {m: report(cm) for m in models}, {m: cm for m in models})


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig()
        assert cfg.stages == ("s1", "s2", "s3", "s4")
        assert cfg.models == MODEL_NAMES

    def test_dndf_defaults(self):
        fc = forest_config(ExperimentConfig(), "dndf", 9)
        assert (fc.num_trees, fc.tree.depth, fc.batch_size, fc.epochs) == (25, 10, 16, 30)
        assert fc.adam.learning_rate == 0.001

    def test_dndt_is_single_full_tree(self):
        fc = forest_config(ExperimentConfig(), "dndt", 9)
        assert fc.num_trees == 1 and fc.tree.used_features_rate == 1.0 and fc.tree.n_used == 9

    @pytest.mark.parametrize("kw", [
        {"stages": ()}, {"models": ()}, {"models": ("xgb",)}, {"stages": ("s9",)},
        {"dndf": {"width": 3}}, {"baselines": {"mlp": {}}}, {"seed": -1},
    ])
    def test_invalid(self, kw):
        with pytest.raises(ValidationError):
            ExperimentConfig(**kw)

    def test_stage_and_model_order_normalized(self):
        cfg = ExperimentConfig(stages=("s3", "S1"), models=("dndf", "gnb"))
        assert cfg.stages == ("s1", "s3") and cfg.models == ("gnb", "dndf")

    def test_yaml(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("seed: 3\nstages: s2\nmodels: all\nsynthetic:\n  n_total: 100\n  n_clinical: 50\n")
        cfg = load_config(path)
        assert cfg.seed == 3 and cfg.stages == ("s2",) and cfg.models == MODEL_NAMES
        assert cfg.synthetic.n_total == 100

    @pytest.mark.parametrize("text", ["bogus: 1\n", "- a\n- b\n", "seed: [unclosed\n", "synthetic: {nope: 1}\n"])
    def test_bad_yaml(self, tmp_path, text):
        path = tmp_path / "c.yaml"
        path.write_text(text)
        with pytest.raises(ValidationError):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ValidationError):
            load_config(tmp_path / "none.yaml")


class TestStage:
    def test_sizes_and_rows(self):
        r = run_stage(fast_config(models=("gnb", "cart")), "s3")
        assert r.n_rows == 180 and r.n_test == 36 and r.n_train == 144
        assert set(r.reports) == {"gnb", "cart"}
        for name, cm in r.confusion.items():
            assert cm.total == r.n_test
            assert r.reports[name].accuracy == (cm.tn + cm.tp) / cm.total

    def test_forest_models_are_kept(self):
        r = run_stage(fast_config(models=("dndt", "dndf")), "s1")
        assert isinstance(r.forests["dndf"], F.ForestModel)
        assert len(r.forests["dndf"].trees) == 3 and len(r.forests["dndt"].trees) == 1

    def test_single_class_stage_error(self, tmp_path):
        from helpers import make_cohort
        c = make_cohort([{"age": 20 + i} for i in range(10)])
        path = tmp_path / "c.csv"
        c.save(path)
        with pytest.raises(StageError, match="class counts"):
            run_stage(ExperimentConfig(data_path=str(path), models=("gnb",)), "s1")


class TestReport:
    def test_reference_row(self):
        text, structured = emit_report([_stage_result(ConfusionMatrix(405, 31, 96, 43))])
        row = next(line for line in text.splitlines() if line.startswith("Deep Neural Decision Forest"))
        assert row.split()[-4:] == ["0.779", "0.779", "0.753", "0.753"]
        assert "[[405, 31], [96, 43]]" in text

    def test_single_model_single_row(self):
        text, _ = emit_report([_stage_result(ConfusionMatrix(10, 2, 3, 5))])
        rows = [line for line in text.splitlines() if line.startswith("Deep Neural")]
        assert len(rows) == 1

    def test_structured_round_trip(self):
        r = _stage_result(ConfusionMatrix(405, 31, 96, 43), models=("gnb", "dndf"))
        text, structured = emit_report([r])
        back = results_from_structured(json.loads(json.dumps(structured)))
        assert back[0].confusion == r.confusion
        assert back[0].reports == r.reports
        assert render_text(structured) == text


class TestRunAll:
    def test_four_stages_nine_models(self, tmp_path):
        results, manifest = run_all(fast_config(), tmp_path)
        assert [r.stage for r in results] == ["s1", "s2", "s3", "s4"]
        assert sum(len(r.reports) for r in results) == 36
        files = {p.relative_to(tmp_path).as_posix() for p in tmp_path.rglob("*") if p.is_file()}
        assert {"manifest.json", "report.txt", "results.json", "timings.json",
                "models/s1_dndf.json", "models/s4_dndt.json", "stage_s3.json"} <= files
        doc = json.loads((tmp_path / "manifest.json").read_text())
        assert doc["failures"] == {} and "timings.json" not in doc["outputs"]
        assert doc["stages"]["s2"]["models"]["dndf"] == "models/s2_dndf.json"

    def test_single_stage(self, tmp_path):
        results, _ = run_all(fast_config(stages=("s1",), models=("gnb",)), tmp_path)
        assert len(results) == 1

    def test_out_dir_does_not_change_digests(self, tmp_path):
        cfg = fast_config(stages=("s4",), models=("gnb", "dndf"))
        run_all(cfg, tmp_path / "a")
        run_all(cfg, tmp_path / "b")
        for name in ("manifest.json", "report.txt", "models/s4_dndf.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_failure_recorded_then_raised(self, tmp_path):
        from helpers import make_cohort
        rows = [{"confirmation_method": "rtpcr", "age": 30 + i, "outcome": "deceased" if i % 2 else "recovered"}
                for i in range(20)]
        path = tmp_path / "c.csv"
        make_cohort(rows).save(path)
        cfg = ExperimentConfig(data_path=str(path), models=("gnb",), stages=("s1", "s3"))
        with pytest.raises(StageError):
            run_all(cfg, tmp_path / "out")
        doc = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert "s3" in doc["failures"] and "s1" in doc["stages"]

    def test_in_memory_matches_written(self, tmp_path):
        results, manifest = run_all(fast_config(stages=("s1",), models=("dndt",)), tmp_path)
        from dndf.modelio import load_model
        loaded = load_model(tmp_path / "models" / "s1_dndt.json")
        X = np.random.default_rng(0).random((5, 9))
        assert np.array_equal(F.forest_forward(loaded, X), F.forest_forward(results[0].forests["dndt"], X))
