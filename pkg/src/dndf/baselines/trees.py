"""CART (Gini), bagged random forest and AdaBoost over decision stumps."""

from __future__ import annotations

import math

import numpy as np

from ._common import check_query, check_train, majority

# Scores are sums of count ratios; distinct values differ by far more than this.
_TIE_TOL = 1e-9


def gini(counts) -> float:
    n = sum(counts)
    if n == 0:
        return 0.0
    return 1.0 - sum((c / n) ** 2 for c in counts)


def _midpoint(a, b):
    mid = a + (b - a) / 2.0
    return a if mid >= b else mid


def _best_threshold(x, y):
    """Best Gini split of one feature.

    Returns ``(score, threshold)`` with score = sum over children of
    ``n_child * gini(child)``, or ``None`` if the feature is constant. Ties go
    to the lowest threshold.
    """
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    cut = np.flatnonzero(xs[:-1] < xs[1:])
    if cut.size == 0:
        return None
    n = xs.size
    pos = np.cumsum(ys)
    nl = cut + 1.0
    pl = pos[cut].astype(np.float64)
    nr = n - nl
    pr = pos[-1] - pl
    left = nl - (pl ** 2 + (nl - pl) ** 2) / nl
    right = nr - (pr ** 2 + (nr - pr) ** 2) / nr
    score = left + right
    best = np.flatnonzero(score <= score.min() + _TIE_TOL)[0]
    i = cut[best]
    return float(score[best]), _midpoint(float(xs[i]), float(xs[i + 1]))


class DecisionTree:
    """Unpruned CART classifier.

    Nodes are stored in flat arrays; ``feature == -1`` marks a leaf. A node is
    split on the (feature, midpoint threshold) minimizing weighted child Gini,
    ties going to the lowest feature index and then the lowest threshold.
    Growth stops at pure nodes, nodes with fewer than two rows, or nodes where
    every feature is constant. Leaves predict their majority class (ties: 1).

    With ``max_features`` set, each split draws features in a random order and
    keeps drawing until that many non-constant ones have been examined.
    """

    def __init__(self, max_features=None, rng=None):
        self.max_features = max_features
        self.rng = rng
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.value = []
        self.n_features = None

    def _candidates(self, X, rows):
        p = X.shape[1]
        if self.max_features is None or self.max_features >= p:
            for f in range(p):
                yield f
            return
        found = 0
        for f in self.rng.permutation(p):
            if found >= self.max_features:
                return
            col = X[rows, f]
            if col.min() < col.max():
                found += 1
                yield int(f)

    def _split(self, X, y, rows):
        best = None
        for f in sorted(self._candidates(X, rows)):
            res = _best_threshold(X[rows, f], y[rows])
            if res is None:
                continue
            score, thr = res
            if best is None or score < best[0] - _TIE_TOL:
                best = (score, f, thr)
        return best

    def _new_node(self, y_rows):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(majority(y_rows))
        return len(self.feature) - 1

    def fit(self, X, y):
        X, y = check_train(X, y)
        self.n_features = X.shape[1]
        self.feature, self.threshold, self.left, self.right, self.value = [], [], [], [], []
        root = self._new_node(y)
        stack = [(root, np.arange(X.shape[0]))]
        while stack:
            node, rows = stack.pop()
            yr = y[rows]
            if rows.size < 2 or yr.min() == yr.max():
                continue
            best = self._split(X, y, rows)
            if best is None:
                continue
            _, f, thr = best
            go_left = X[rows, f] <= thr
            lrows, rrows = rows[go_left], rows[~go_left]
            self.feature[node] = f
            self.threshold[node] = thr
            self.left[node] = self._new_node(y[lrows])
            self.right[node] = self._new_node(y[rrows])
            stack.append((self.right[node], rrows))
            stack.append((self.left[node], lrows))
        self._freeze()
        return self

    def _freeze(self):
        self.feature = np.asarray(self.feature, dtype=np.int64)
        self.threshold = np.asarray(self.threshold, dtype=np.float64)
        self.left = np.asarray(self.left, dtype=np.int64)
        self.right = np.asarray(self.right, dtype=np.int64)
        self.value = np.asarray(self.value, dtype=np.int64)

    @property
    def node_count(self):
        return len(self.feature)

    def predict(self, X):
        X = check_query(X, self.n_features)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            cur = node[idx]
            go_left = X[idx, self.feature[cur]] <= self.threshold[cur]
            node[idx] = np.where(go_left, self.left[cur], self.right[cur])
            active = self.feature[node] >= 0
        return self.value[node]

    def to_tuple(self, node=0):
        """Nested ``(feature, threshold, left, right)`` / ``("leaf", class)`` view."""
        if self.feature[node] < 0:
            return ("leaf", int(self.value[node]))
        return (int(self.feature[node]), float(self.threshold[node]),
                self.to_tuple(self.left[node]), self.to_tuple(self.right[node]))


class RandomForest:
    """Bagged CART trees with per-split feature subsampling; majority vote, ties to 1."""

    def __init__(self, n_trees=100, max_features="sqrt", bootstrap=True, seed=0):
        self.n_trees = n_trees
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.seed = seed
        self.trees = []

    def _resolve_max_features(self, p):
        if self.max_features is None:
            return None
        if self.max_features == "sqrt":
            return math.ceil(math.sqrt(p))
        return int(self.max_features)

    def fit(self, X, y):
        X, y = check_train(X, y)
        n, p = X.shape
        k = self._resolve_max_features(p)
        self.trees = []
        for t in range(self.n_trees):
            rng = np.random.default_rng([self.seed, t])
            rows = rng.integers(0, n, size=n) if self.bootstrap else np.arange(n)
            tree = DecisionTree(max_features=k, rng=rng).fit(X[rows], y[rows])
            self.trees.append(tree)
        return self

    def votes(self, X):
        return np.sum([tree.predict(X) for tree in self.trees], axis=0)

    def predict(self, X):
        return (2 * self.votes(X) >= len(self.trees)).astype(np.int64)


def best_stump(X, s, w):
    """Weighted-error-minimizing stump ``polarity * sign(x_f > threshold)``.

    ``s`` holds labels in {-1, +1}. Returns ``(error, feature, threshold,
    polarity)`` or ``None`` if every feature is constant. Ties go to the lowest
    feature, then the lowest threshold, then polarity +1.
    """
    best = None
    w_pos = np.where(s > 0, w, 0.0)
    w_neg = np.where(s < 0, w, 0.0)
    total_neg = w_neg.sum()
    total = w.sum()
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        cut = np.flatnonzero(xs[:-1] < xs[1:])
        if cut.size == 0:
            continue
        # polarity +1 predicts +1 right of the threshold
        err_plus = np.cumsum(w_pos[order])[cut] + (total_neg - np.cumsum(w_neg[order])[cut])
        err_minus = total - err_plus
        for err, polarity in ((err_plus, 1), (err_minus, -1)):
            i = int(np.flatnonzero(err <= err.min() + 1e-12)[0])
            cand = (float(err[i]), f, _midpoint(float(xs[cut[i]]), float(xs[cut[i] + 1])), polarity)
            if best is None or cand[0] < best[0] - 1e-12:
                best = cand
            elif abs(cand[0] - best[0]) <= 1e-12 and _tie_key(cand) < _tie_key(best):
                best = cand
    return best


def _tie_key(stump):
    _, f, thr, polarity = stump
    return (f, thr, polarity < 0)


def stage_weight(eps: float) -> float:
    """alpha = 1/2 ln((1 - eps) / eps), with eps floored at 1e-10."""
    eps = max(eps, 1e-10)
    return 0.5 * math.log((1.0 - eps) / eps)


class AdaBoost:
    """Discrete AdaBoost with depth-1 stumps.

    Stops early when the best stump's weighted error reaches 0.5 (the stump is
    discarded) or 0 (the stump is kept with a capped weight). Predicts class 1
    iff the weighted vote is >= 0; an empty ensemble predicts the training
    majority.
    """

    def __init__(self, n_rounds=50):
        self.n_rounds = n_rounds
        self.stumps = []
        self.alphas = []
        self.errors = []
        self.first_weights = None
        self.fallback = 1
        self.n_features = None

    def fit(self, X, y):
        X, y = check_train(X, y)
        self.n_features = X.shape[1]
        self.fallback = majority(y)
        s = np.where(y == 1, 1.0, -1.0)
        w = np.full(X.shape[0], 1.0 / X.shape[0])
        self.first_weights = w.copy()
        self.stumps, self.alphas, self.errors = [], [], []
        for _ in range(self.n_rounds):
            found = best_stump(X, s, w)
            if found is None:
                break
            eps, f, thr, pol = found
            if eps >= 0.5:
                break
            alpha = stage_weight(eps)
            self.stumps.append((f, thr, pol))
            self.alphas.append(alpha)
            self.errors.append(eps)
            if eps <= 0:
                break
            h = pol * np.where(X[:, f] > thr, 1.0, -1.0)
            w = w * np.exp(-alpha * s * h)
            w /= w.sum()
        return self

    def decision_function(self, X):
        X = check_query(X, self.n_features)
        score = np.zeros(X.shape[0])
        for (f, thr, pol), alpha in zip(self.stumps, self.alphas):
            score += alpha * pol * np.where(X[:, f] > thr, 1.0, -1.0)
        return score

    def predict(self, X):
        if not self.stumps:
            X = check_query(X, self.n_features)
            return np.full(X.shape[0], self.fallback, dtype=np.int64)
        return (self.decision_function(X) >= 0).astype(np.int64)
