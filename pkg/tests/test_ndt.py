import math

import numpy as np
import pytest

from dndf import numcore as nc
from dndf import selfcheck
from dndf.errors import ShapeError, ValidationError
from dndf.ndt import TreeConfig, TreeParams, init_tree, n_used_features, tree_forward, tree_grads


def _sig(z):
    return 1.0 / (1.0 + math.exp(-z))


def test_depth10_sizes():
    p = init_tree(TreeConfig(depth=10))
    assert p.W.shape == (1023, 9)
    assert p.b.shape == (1023,)
    assert p.pi_logits.shape == (1024, 2)
    assert p.depth == 10


def test_full_rate_uses_every_feature():
    assert init_tree(TreeConfig(depth=2, used_features_rate=1.0, n_features=9)).feature_mask.tolist() == list(range(9))


def test_mask_width_rounds_half_up():
    assert n_used_features(0.5, 9) == 5
    assert n_used_features(0.5, 7) == 4
    assert n_used_features(0.01, 9) == 1


def test_init_is_deterministic_and_small():
    a = init_tree(TreeConfig(depth=4, used_features_rate=0.5, seed=11))
    b = init_tree(TreeConfig(depth=4, used_features_rate=0.5, seed=11))
    for key in ("W", "b", "pi_logits"):
        assert np.array_equal(a.arrays()[key], b.arrays()[key])
    assert np.array_equal(a.feature_mask, b.feature_mask)
    assert np.all(np.abs(a.W) <= 0.05) and not a.pi_logits.any()


def test_invalid_configs():
    for kwargs in ({"n_features": 0}, {"depth": 0}, {"used_features_rate": 0.0}, {"used_features_rate": 1.5}):
        with pytest.raises(ValidationError):
            TreeConfig(**kwargs)


def test_depth1_symmetric():
    p = TreeParams(np.arange(3), np.zeros((1, 3)), np.zeros(1), np.zeros((2, 2)), 3)
    mu, prob = tree_forward(p, np.array([[0.3, 0.1, 0.9]]))
    assert mu.tolist() == [[0.5, 0.5]]
    assert prob.tolist() == [[0.5, 0.5]]


def test_depth2_hand_computed_mu():
    W = np.array([[1.0, -2.0], [0.5, 0.5], [-1.0, 3.0]])
    b = np.array([0.1, -0.3, 0.2])
    pi = np.array([[0.0, 1.0], [2.0, 0.0], [0.5, 0.5], [-1.0, 1.0]])
    x = np.array([0.4, 0.7])
    p = TreeParams(np.arange(2), W, b, pi, 2)
    mu, prob = tree_forward(p, x[None, :])

    d = [_sig(W[i] @ x + b[i]) for i in range(3)]
    expected = [d[0] * d[1], d[0] * (1 - d[1]), (1 - d[0]) * d[2], (1 - d[0]) * (1 - d[2])]
    assert mu[0] == pytest.approx(expected, abs=1e-15)

    leaf_pi = [math.exp(r[1]) / (math.exp(r[0]) + math.exp(r[1])) for r in pi]
    assert prob[0, 1] == pytest.approx(sum(m * q for m, q in zip(expected, leaf_pi)), abs=1e-15)


def test_mask_selects_columns():
    p = TreeParams(np.array([2]), np.array([[1.0]]), np.zeros(1), np.zeros((2, 2)), 3)
    mu, _ = tree_forward(p, np.array([[100.0, -100.0, 0.0]]))
    assert mu.tolist() == [[0.5, 0.5]]


def test_shape_error():
    p = init_tree(TreeConfig(depth=2, n_features=3))
    with pytest.raises(ShapeError):
        tree_forward(p, np.zeros((2, 4)))


@pytest.mark.parametrize("depth", range(1, 11))
def test_mu_and_prob_are_distributions(depth):
    for seed in range(20):
        rng = np.random.default_rng(seed)
        p = init_tree(TreeConfig(depth=depth, n_features=5, seed=seed))
        p.W = rng.normal(scale=5.0, size=p.W.shape)
        p.b = rng.normal(scale=5.0, size=p.b.shape)
        p.pi_logits = rng.normal(scale=5.0, size=p.pi_logits.shape)
        mu, prob = tree_forward(p, rng.normal(size=(3, 5)))
        assert np.all(mu >= 0)
        assert np.abs(mu.sum(axis=1) - 1).max() <= 1e-9
        assert np.abs(prob.sum(axis=1) - 1).max() <= 1e-9


def test_rows_are_independent(rng):
    p = init_tree(TreeConfig(depth=4, n_features=5, seed=3))
    p.W = rng.normal(size=p.W.shape)
    X = rng.normal(size=(8, 5))
    perm = rng.permutation(8)
    _, full = tree_forward(p, X)
    _, shuffled = tree_forward(p, X[perm])
    assert np.allclose(full[perm], shuffled, rtol=0, atol=1e-15)
    for i in range(8):
        _, single = tree_forward(p, X[i:i + 1])
        assert np.allclose(single[0], full[i], rtol=0, atol=1e-15)


def test_bias_gradient_vanishes_by_symmetry():
    p = TreeParams(np.arange(2), np.zeros((3, 2)), np.zeros(3), np.zeros((4, 2)), 2)
    X = np.array([[0.1, 0.9], [0.4, 0.2], [0.8, 0.5], [0.3, 0.3]])
    y = np.array([0.0, 1.0, 1.0, 0.0])
    g = tree_grads(p, X, y)
    assert np.all(g["b"] == 0.0)
    rep = nc.gradient_check(
        lambda t: nc.bce(nc.take(_prob(t, X, 2), (Ellipsis, 1)), y), p.arrays(),
        step=selfcheck.MODEL_STEP)
    assert rep.passed, rep.max_rel_error


def _prob(t, X, depth):
    from dndf.ndt import routing_graph
    return routing_graph(t["W"], t["b"], t["pi_logits"], X, depth)[1]


def test_saturated_correct_predictions_have_tiny_gradients():
    p = init_tree(TreeConfig(depth=3, n_features=2, seed=0))
    p.pi_logits[:, 1] = 40.0
    X = np.random.default_rng(0).random((5, 2))
    g = tree_grads(p, X, np.ones(5))
    for arr in g.values():
        assert np.abs(arr).max() < 1e-12


@pytest.mark.parametrize("seed", range(10))
def test_depth3_gradients_match_finite_differences(seed):
    rep = selfcheck.tree_check(seed)
    assert rep.passed, rep.max_rel_error


def test_tree_grads_agree_with_checker(rng):
    p = init_tree(TreeConfig(depth=3, n_features=4, seed=2))
    p.W = rng.normal(size=p.W.shape)
    p.pi_logits = rng.normal(size=p.pi_logits.shape)
    X = rng.uniform(0.1, 1, size=(5, 4))
    y = np.array([0, 1, 1, 0, 1.0])
    g = tree_grads(p, X, y)
    leaves = {k: nc.Tensor(v, requires_grad=True) for k, v in p.arrays().items()}
    nc.bce(nc.take(_prob(leaves, X[:, p.feature_mask], 3), (Ellipsis, 1)), y).backward()
    for k in g:
        assert np.array_equal(g[k], leaves[k].grad)
