import json

import numpy as np
import pytest

from dndf import forest as F
from dndf.errors import ModelLoadError, VersionError
from dndf.modelio import FORMAT, VERSION, dumps_model, load_model, loads_model, save_model
from dndf.ndt import TreeConfig


@pytest.fixture
def model():
    cfg = F.ForestConfig(num_trees=3, tree=TreeConfig(depth=3, used_features_rate=0.5, n_features=5),
                         batch_size=4, epochs=2, seed=13)
    rng = np.random.default_rng(0)
    X = rng.random((30, 5))
    return F.train(F.init_forest(cfg), X, (X[:, 0] > 0.5).astype(float))


def test_round_trip_bit_exact(model, tmp_path):
    path = tmp_path / "m.json"
    save_model(model, path)
    loaded = load_model(path)
    X = np.random.default_rng(1).normal(size=(50, 5))
    assert np.array_equal(F.forest_forward(loaded, X), F.forest_forward(model, X))
    assert loaded.config == model.config
    assert loaded.training_log == model.training_log
    assert dumps_model(loaded) == path.read_text()


def test_header(model):
    doc = json.loads(dumps_model(model))
    assert doc["format"] == FORMAT and doc["version"] == VERSION
    assert doc["seeds"] == {"forest": 13, "trees": [13, 12, 15]}
    assert len(doc["digest"]) == 64


def test_truncated(model, tmp_path):
    text = dumps_model(model)
    with pytest.raises(ModelLoadError):
        loads_model(text[: len(text) // 2])


def test_tampered(model):
    doc = json.loads(dumps_model(model))
    doc["training_log"][0] += 1.0
    with pytest.raises(ModelLoadError, match="digest"):
        loads_model(json.dumps(doc))


def test_unknown_version(model):
    doc = json.loads(dumps_model(model))
    doc["version"] = 99
    with pytest.raises(VersionError):
        loads_model(json.dumps(doc))


def test_wrong_format():
    with pytest.raises(ModelLoadError):
        loads_model('{"format": "other"}')


def test_missing_file(tmp_path):
    with pytest.raises(ModelLoadError):
        load_model(tmp_path / "none.json")
