"""Ensemble of soft decision trees trained jointly with Adam.

All trees in a forest share depth and mask width, so training stacks their
parameters on a leading tree axis and runs one graph per mini-batch.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import numcore as nc
from .errors import ShapeError, TrainingError, ValidationError
from .ndt import TreeConfig, TreeParams, init_tree, routing_graph

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ForestConfig:
    num_trees: int = 25
    tree: TreeConfig = field(default_factory=lambda: TreeConfig(depth=10, used_features_rate=0.5))
    batch_size: int = 16
    epochs: int = 30
    adam: nc.AdamConfig = field(default_factory=nc.AdamConfig)
    seed: int = 0

    def __post_init__(self):
        if self.num_trees < 1:
            raise ValidationError("num_trees must be >= 1")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if self.seed < 0:
            raise ValidationError("seed must be non-negative")


@dataclass
class ForestModel:
    config: ForestConfig
    trees: list
    training_log: list = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return self.trees[0].n_features

    @property
    def depth(self) -> int:
        return self.config.tree.depth

    def copy(self) -> "ForestModel":
        return ForestModel(self.config, [t.copy() for t in self.trees], list(self.training_log))


def tree_seed(forest_seed: int, index: int) -> int:
    return forest_seed ^ index


def init_forest(cfg: ForestConfig) -> ForestModel:
    trees = [init_tree(replace(cfg.tree, seed=tree_seed(cfg.seed, t))) for t in range(cfg.num_trees)]
    return ForestModel(cfg, trees, [])


def _stack(trees):
    masks = np.stack([t.feature_mask for t in trees])
    params = {
        "W": np.stack([t.W for t in trees]),
        "b": np.stack([t.b for t in trees]),
        "pi_logits": np.stack([t.pi_logits for t in trees]),
    }
    return masks, params


def _unstack(masks, params, n_features):
    return [
        TreeParams(masks[t].copy(), params["W"][t].copy(), params["b"][t].copy(),
                   params["pi_logits"][t].copy(), n_features)
        for t in range(masks.shape[0])
    ]


def _masked_inputs(X, masks):
    # [B, F] -> [T, B, U]
    return np.ascontiguousarray(np.moveaxis(X[:, masks], 1, 0))


def tree_mean(per_tree: nc.Tensor) -> nc.Tensor:
    """Mean over the leading tree axis, pivoted on tree 0.

    Computed as ``p_0 + sum_t(p_t - p_0) / T`` with the sum taken in tree-index
    order. Algebraically the plain arithmetic mean; a forest of identical
    trees returns tree 0's output exactly.
    """
    T = per_tree.shape[0]
    first = nc.take(per_tree, 0)
    if T == 1:
        return first
    return nc.add(first, nc.scale(nc.reduce_sum(nc.sub(per_tree, first), axis=0), 1.0 / T))


def _forest_graph(params, masks, X, depth):
    _, prob = routing_graph(params["W"], params["b"], params["pi_logits"],
                            _masked_inputs(X, masks), depth)
    return tree_mean(prob)


def forest_forward(m: ForestModel, X) -> np.ndarray:
    """Class probabilities ``[batch, 2]`` averaged over trees."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != m.n_features:
        raise ShapeError(f"expected input of shape [batch, {m.n_features}], got {X.shape}")
    masks, params = _stack(m.trees)
    return _forest_graph(params, masks, X, m.depth).data


def forest_loss(tensors, masks, X, y, depth) -> nc.Tensor:
    prob = _forest_graph(tensors, masks, X, depth)
    return nc.bce(nc.take(prob, (Ellipsis, 1)), y)


def forest_grads(m: ForestModel, X, y) -> dict:
    """Gradients of the batch BCE w.r.t. the stacked ``W``, ``b``, ``pi_logits``."""
    masks, params = _stack(m.trees)
    leaves = {k: nc.Tensor(v, requires_grad=True) for k, v in params.items()}
    loss = forest_loss(leaves, masks, np.asarray(X, dtype=np.float64),
                       np.asarray(y, dtype=np.float64), m.depth)
    loss.backward()
    return {k: t.grad for k, t in leaves.items()}


def batches_per_epoch(n_rows: int, batch_size: int) -> int:
    return -(-n_rows // batch_size)


def train(m: ForestModel, X, y) -> ForestModel:
    """Train a copy of ``m`` on ``(X, y)``; the input model is left untouched."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise TrainingError("training matrix is empty")
    if X.shape[1] != m.n_features:
        raise ShapeError(f"expected {m.n_features} columns, got {X.shape[1]}")
    if y.shape != (X.shape[0],):
        raise ShapeError(f"labels of shape {y.shape} for {X.shape[0]} rows")
    classes = np.unique(y)
    if classes.size < 2:
        raise TrainingError(f"training data holds a single class: {classes.tolist()}")

    cfg = m.config
    masks, params = _stack(m.trees)
    store = nc.ParamStore(params)
    rng = np.random.default_rng(cfg.seed)
    n = X.shape[0]
    history = list(m.training_log)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            leaves = {k: nc.Tensor(v, requires_grad=True) for k, v in store.params.items()}
            loss = forest_loss(leaves, masks, X[idx], y[idx], m.depth)
            loss.backward()
            nc.adam_step(store, {k: t.grad for k, t in leaves.items()}, cfg.adam)
            total += float(loss.data) * idx.size
        history.append(total / n)
        log.debug("epoch %d/%d loss %.6f", epoch + 1, cfg.epochs, history[-1])
    return ForestModel(cfg, _unstack(masks, store.params, m.n_features), history)


def predict(m: ForestModel, X, threshold: float = 0.5) -> np.ndarray:
    """Label 1 (deceased) iff the forest's class-1 probability is >= threshold."""
    return (forest_forward(m, X)[:, 1] >= threshold).astype(np.int64)
