"""Versioned JSON model files for trained forests.

Arrays are stored as base64 little-endian float64 (int64 for masks), so a
round trip is bit-exact. A SHA-256 digest over the canonical JSON body guards
against truncation and tampering.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import numcore as nc
from .errors import ModelLoadError, VersionError
from .forest import ForestConfig, ForestModel, tree_seed
from .ndt import TreeConfig, TreeParams

FORMAT = "dndf-forest"
VERSION = 1


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _encode(arr, dtype):
    arr = np.ascontiguousarray(arr, dtype=np.dtype(dtype).newbyteorder("<"))
    return {"dtype": dtype, "shape": list(arr.shape), "data": base64.b64encode(arr.tobytes()).decode("ascii")}


def _decode(obj):
    dtype = np.dtype(obj["dtype"]).newbyteorder("<")
    raw = base64.b64decode(obj["data"].encode("ascii"), validate=True)
    arr = np.frombuffer(raw, dtype=dtype).reshape(obj["shape"])
    return arr.astype(obj["dtype"])


def config_to_dict(cfg: ForestConfig) -> dict:
    return asdict(cfg)


def config_from_dict(d: dict) -> ForestConfig:
    return ForestConfig(
        num_trees=d["num_trees"],
        tree=TreeConfig(**d["tree"]),
        batch_size=d["batch_size"],
        epochs=d["epochs"],
        adam=nc.AdamConfig(**d["adam"]),
        seed=d["seed"],
    )


def model_to_dict(m: ForestModel) -> dict:
    body = {
        "format": FORMAT,
        "version": VERSION,
        "config": config_to_dict(m.config),
        "seeds": {"forest": m.config.seed,
                  "trees": [tree_seed(m.config.seed, t) for t in range(len(m.trees))]},
        "n_features": m.n_features,
        "training_log": list(m.training_log),
        "trees": [
            {
                "feature_mask": _encode(t.feature_mask, "int64"),
                "W": _encode(t.W, "float64"),
                "b": _encode(t.b, "float64"),
                "pi_logits": _encode(t.pi_logits, "float64"),
            }
            for t in m.trees
        ],
    }
    return {**body, "digest": sha256_text(canonical_json(body))}


def dumps_model(m: ForestModel) -> str:
    return canonical_json(model_to_dict(m)) + "\n"


def save_model(m: ForestModel, path) -> None:
    Path(path).write_text(dumps_model(m), encoding="utf-8")


def loads_model(text: str) -> ForestModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelLoadError(f"model file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise ModelLoadError("not a forest model file")
    if doc.get("version") != VERSION:
        raise VersionError(f"unsupported model format version {doc.get('version')!r}; expected {VERSION}")
    digest = doc.pop("digest", None)
    if digest != sha256_text(canonical_json(doc)):
        raise ModelLoadError("model digest mismatch: file is corrupted")
    try:
        cfg = config_from_dict(doc["config"])
        n_features = int(doc["n_features"])
        trees = [
            TreeParams(_decode(t["feature_mask"]), _decode(t["W"]), _decode(t["b"]),
                       _decode(t["pi_logits"]), n_features)
            for t in doc["trees"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelLoadError(f"malformed model file: {exc}") from None
    if len(trees) != cfg.num_trees:
        raise ModelLoadError(f"expected {cfg.num_trees} trees, found {len(trees)}")
    return ForestModel(cfg, trees, [float(x) for x in doc["training_log"]])


def load_model(path) -> ForestModel:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ModelLoadError(f"cannot read model file {path}: {exc}") from None
    return loads_model(text)
