"""Differentiable (soft) decision tree.

Internal nodes are indexed breadth-first: level ``l`` holds nodes
``[2**l - 1, 2**(l + 1) - 1)``, and the children of node ``i`` are ``2i + 1``
(left) and ``2i + 2`` (right). Each node routes left with probability
``d = sigmoid(w . x_masked + b)``. Leaf-reach probabilities ``mu`` are built
one level at a time: the children of each current leaf get ``mu * d`` and
``mu - mu * d``, which are expanded on a trailing axis, concatenated and
flattened so leaf order follows the breadth-first numbering.

The graph helpers accept arbitrary leading axes; the forest stacks all of
its trees on a leading tree axis and reuses them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .errors import ShapeError, ValidationError

INIT_SCALE = 0.05


def n_used_features(rate: float, n_features: int) -> int:
    # half-up rounding, so 0.5 * 9 -> 5
    return max(1, int(math.floor(rate * n_features + 0.5)))


@dataclass(frozen=True)
class TreeConfig:
    depth: int = 10
    used_features_rate: float = 1.0
    n_features: int = 9
    seed: int = 0

    def __post_init__(self):
        if self.depth < 1:
            raise ValidationError(f"depth must be >= 1, got {self.depth}")
        if self.n_features < 1:
            raise ValidationError(f"n_features must be >= 1, got {self.n_features}")
        if not 0 < self.used_features_rate <= 1:
            raise ValidationError("used_features_rate must lie in (0, 1]")
        if self.seed < 0:
            raise ValidationError("seed must be non-negative")

    @property
    def n_used(self) -> int:
        return n_used_features(self.used_features_rate, self.n_features)

    @property
    def n_leaves(self) -> int:
        return 2 ** self.depth

    @property
    def n_internal(self) -> int:
        return 2 ** self.depth - 1


@dataclass
class TreeParams:
    feature_mask: np.ndarray  # int indices, shape [n_used]
    W: np.ndarray  # [internal, n_used]
    b: np.ndarray  # [internal]
    pi_logits: np.ndarray  # [leaves, 2]
    n_features: int

    @property
    def depth(self) -> int:
        return int(round(math.log2(self.pi_logits.shape[0])))

    def arrays(self) -> dict:
        return {"W": self.W, "b": self.b, "pi_logits": self.pi_logits}

    def copy(self) -> "TreeParams":
        return TreeParams(self.feature_mask.copy(), self.W.copy(), self.b.copy(),
                          self.pi_logits.copy(), self.n_features)


def init_tree(cfg: TreeConfig) -> TreeParams:
    rng = np.random.default_rng(cfg.seed)
    mask = np.sort(rng.choice(cfg.n_features, size=cfg.n_used, replace=False)).astype(np.int64)
    W = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(cfg.n_internal, cfg.n_used))
    b = rng.uniform(-INIT_SCALE, INIT_SCALE, size=cfg.n_internal)
    pi_logits = np.zeros((cfg.n_leaves, 2))
    return TreeParams(mask, W, b, pi_logits, cfg.n_features)


def _check_width(X, n_features):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != n_features:
        raise ShapeError(f"expected input of shape [batch, {n_features}], got {X.shape}")
    return X


def routing_graph(W, b, pi_logits, x_masked, depth):
    """Build ``(mu, prob)`` Tensors.

    Shapes (``...`` = optional leading axes shared by all arguments):
    ``W [..., I, U]``, ``b [..., I]``, ``pi_logits [..., L, 2]``,
    ``x_masked [..., B, U]`` -> ``mu [..., B, L]``, ``prob [..., B, 2]``.
    """
    x_masked = nc._as_tensor(x_masked)
    lead = x_masked.shape[:-1]
    mu = None
    for level in range(depth):
        lo, hi = 2 ** level - 1, 2 ** (level + 1) - 1
        W_level = nc.take(W, (Ellipsis, slice(lo, hi), slice(None)))
        b_level = nc.take(b, (Ellipsis, slice(lo, hi)))
        d = nc.sigmoid(nc.add(nc.matmul(x_masked, nc.transpose(W_level)),
                              nc.expand_dims(b_level, -2)))
        if mu is None:
            left, right = d, nc.rsub(1.0, d)
        else:
            left = nc.mul(mu, d)
            right = nc.sub(mu, left)
        mu = nc.reshape(nc.concat([nc.expand_dims(left, -1), nc.expand_dims(right, -1)], axis=-1),
                        lead + (2 ** (level + 1),))
    prob = nc.matmul(mu, nc.softmax(pi_logits))
    return mu, prob


def tree_forward(p: TreeParams, X):
    """Return ``(mu [batch, leaves], prob [batch, 2])`` as numpy arrays."""
    X = _check_width(X, p.n_features)
    mu, prob = routing_graph(p.W, p.b, p.pi_logits, X[:, p.feature_mask], p.depth)
    return mu.data, prob.data


def tree_loss(tensors, x_masked, y, depth):
    """Batch BCE on the deceased-class probability, as a scalar Tensor."""
    _, prob = routing_graph(tensors["W"], tensors["b"], tensors["pi_logits"], x_masked, depth)
    return nc.bce(nc.take(prob, (Ellipsis, 1)), y)


def tree_grads(p: TreeParams, X, y) -> dict:
    """Exact gradients of the batch BCE w.r.t. ``W``, ``b`` and ``pi_logits``."""
    X = _check_width(X, p.n_features)
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (X.shape[0],):
        raise ShapeError(f"labels of shape {y.shape} for {X.shape[0]} rows")
    leaves = {k: nc.Tensor(v, requires_grad=True) for k, v in p.arrays().items()}
    loss = tree_loss(leaves, X[:, p.feature_mask], y, p.depth)
    loss.backward()
    return {k: t.grad for k, t in leaves.items()}
