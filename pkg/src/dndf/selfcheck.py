"""Seeded gradient and invariant self-tests, shared by ``dndf check`` and the test suite.

Every kernel case is wrapped as ``sum(R * kernel(...))`` with a random ``R`` so
each output coordinate contributes to the checked scalar. Inputs are drawn
away from the kinks of ``clip`` so central differences stay valid, and model
inputs are kept off zero: a near-zero feature makes its weight gradient tiny,
and the relative error of that coordinate then measures float round-off only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import forest as F
from . import numcore as nc
from .ndt import TreeConfig, init_tree, routing_graph

GRAD_TOL = 1e-4
KERNEL_STEP = 1e-5
# model losses chain many kernels, so round-off at 1e-5 can swamp tiny
# coordinates; the five-point stencil keeps 1e-3 accurate to ~1e-12
MODEL_STEP = 1e-3


def _away_from(rng, shape, points, margin=0.05, lo=-1.0, hi=1.0):
    x = rng.uniform(lo, hi, size=shape)
    for p in points:
        close = np.abs(x - p) < margin
        x[close] += 2 * margin
    return x


def _kernel_cases():
    """name -> builder(rng) returning ``(f, params)``."""

    def unary(op, make):
        def build(rng):
            params = {"a": make(rng)}
            R = rng.normal(size=op(nc.Tensor(params["a"])).shape)
            return (lambda t: nc.reduce_sum(nc.mul(op(t["a"]), R))), params
        return build

    def binary(op, shape_a, shape_b):
        def build(rng):
            params = {"a": rng.normal(size=shape_a), "b": rng.normal(size=shape_b)}
            R = rng.normal(size=op(nc.Tensor(params["a"]), nc.Tensor(params["b"])).shape)
            return (lambda t: nc.reduce_sum(nc.mul(op(t["a"], t["b"]), R))), params
        return build

    def bce_case(rng):
        params = {"p": rng.uniform(0.05, 0.95, size=7)}
        y = rng.integers(0, 2, size=7).astype(np.float64)
        return (lambda t: nc.bce(t["p"], y)), params

    def concat_case(rng):
        params = {"a": rng.normal(size=(3, 2)), "b": rng.normal(size=(3, 4))}
        R = rng.normal(size=(3, 6))
        return (lambda t: nc.reduce_sum(nc.mul(nc.concat([t["a"], t["b"]]), R))), params

    normal = lambda shape: (lambda rng: rng.normal(size=shape))  # noqa: E731
    return {
        "add": binary(nc.add, (3, 4), (4,)),
        "sub": binary(nc.sub, (3, 1), (3, 4)),
        "mul": binary(nc.mul, (2, 3, 4), (3, 1)),
        "matmul": binary(nc.matmul, (2, 3, 4), (4, 5)),
        "scale": unary(lambda a: nc.scale(a, -1.7), normal((3, 4))),
        "rsub": unary(lambda a: nc.rsub(1.0, a), normal((5,))),
        "sigmoid": unary(nc.sigmoid, lambda rng: rng.normal(scale=3.0, size=(4, 3))),
        "log": unary(nc.log, lambda rng: rng.uniform(0.2, 3.0, size=(4, 3))),
        "clip": unary(lambda a: nc.clip(a, -0.5, 0.5),
                      lambda rng: _away_from(rng, (4, 5), (-0.5, 0.5))),
        "softmax": unary(nc.softmax, lambda rng: rng.normal(scale=2.0, size=(3, 5))),
        "transpose": unary(nc.transpose, normal((2, 3, 4))),
        "reshape": unary(lambda a: nc.reshape(a, (4, 3)), normal((2, 6))),
        "expand_dims": unary(lambda a: nc.expand_dims(a, 1), normal((3, 4))),
        "concat": concat_case,
        "take": unary(lambda a: nc.take(a, (slice(1, 3), 0)), normal((4, 3))),
        "reduce_sum": unary(lambda a: nc.reduce_sum(a, axis=0), normal((3, 4))),
        "reduce_mean": unary(lambda a: nc.reduce_mean(a, axis=1), normal((3, 4))),
        "bce": bce_case,
    }


KERNELS = tuple(_kernel_cases())


def kernel_check(name: str, seed: int) -> nc.GradCheckReport:
    f, params = _kernel_cases()[name](np.random.default_rng(seed))
    return nc.gradient_check(f, params, step=KERNEL_STEP, tol=GRAD_TOL)


def tree_check(seed: int, depth: int = 3, n_features: int = 4, batch: int = 6) -> nc.GradCheckReport:
    """Depth-``depth`` tree with random (non-initial) parameters."""
    rng = np.random.default_rng(seed)
    p = init_tree(TreeConfig(depth=depth, n_features=n_features, seed=seed))
    params = {"W": rng.normal(size=p.W.shape), "b": rng.normal(size=p.b.shape),
              "pi_logits": rng.normal(size=p.pi_logits.shape)}
    X = rng.uniform(0.1, 1.0, size=(batch, n_features))[:, p.feature_mask]
    y = rng.integers(0, 2, size=batch).astype(np.float64)

    def f(t):
        _, prob = routing_graph(t["W"], t["b"], t["pi_logits"], X, depth)
        return nc.bce(nc.take(prob, (Ellipsis, 1)), y)

    return nc.gradient_check(f, params, step=MODEL_STEP, tol=GRAD_TOL)


def forest_check(seed: int, num_trees: int = 2, depth: int = 2, n_features: int = 4,
                 batch: int = 6) -> nc.GradCheckReport:
    rng = np.random.default_rng(seed)
    cfg = F.ForestConfig(num_trees=num_trees,
                         tree=TreeConfig(depth=depth, used_features_rate=0.5, n_features=n_features),
                         seed=seed)
    masks, stacked = F._stack(F.init_forest(cfg).trees)
    params = {k: rng.normal(size=v.shape) for k, v in stacked.items()}
    X = rng.uniform(0.1, 1.0, size=(batch, n_features))
    y = rng.integers(0, 2, size=batch).astype(np.float64)
    return nc.gradient_check(lambda t: F.forest_loss(t, masks, X, y, depth), params,
                             step=MODEL_STEP, tol=GRAD_TOL)


def mu_sum_error(seed: int, depth: int, n_features: int = 5, batch: int = 4) -> float:
    """Largest ``|sum_leaves mu - 1|`` for random parameters and inputs."""
    rng = np.random.default_rng(seed)
    n_int, n_leaves = 2 ** depth - 1, 2 ** depth
    W = rng.normal(scale=2.0, size=(n_int, n_features))
    b = rng.normal(size=n_int)
    pi = rng.normal(size=(n_leaves, 2))
    X = rng.normal(size=(batch, n_features))
    mu, _ = routing_graph(W, b, pi, X, depth)
    return float(np.max(np.abs(mu.data.sum(axis=-1) - 1.0)))


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def run_all_checks(trials: int = 100, seed: int = 0) -> list:
    """Gradient suite over ``trials`` seeded trials plus the mu invariant."""
    out = []
    worst = {"kernels": 0.0, "tree": 0.0, "forest": 0.0}
    for trial in range(trials):
        s = seed + trial
        for name in KERNELS:
            worst["kernels"] = max(worst["kernels"], kernel_check(name, s).worst)
        worst["tree"] = max(worst["tree"], tree_check(s).worst)
        worst["forest"] = max(worst["forest"], forest_check(s).worst)
    for key, err in worst.items():
        out.append(CheckResult(f"gradients/{key}", err < GRAD_TOL,
                               f"max relative error {err:.2e} over {trials} trials"))
    mu_err = max(mu_sum_error(seed + i, 1 + i % 10) for i in range(trials))
    out.append(CheckResult("mu-normalization", mu_err <= 1e-9, f"max |sum mu - 1| = {mu_err:.2e}"))
    return out
