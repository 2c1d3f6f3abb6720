"""Gaussian naive Bayes and k-nearest neighbours."""

from __future__ import annotations

import numpy as np

from ..errors import TrainingError
from ._common import check_query, check_train

VAR_FLOOR = 1e-9


class GaussianNB:
    def __init__(self):
        self.priors = None
        self.means = None
        self.variances = None

    def fit(self, X, y):
        X, y = check_train(X, y, both_classes=True)
        self.priors = np.array([np.mean(y == k) for k in (0, 1)])
        self.means = np.stack([X[y == k].mean(axis=0) for k in (0, 1)])
        self.variances = np.maximum(np.stack([X[y == k].var(axis=0) for k in (0, 1)]), VAR_FLOOR)
        return self

    def joint_log_likelihood(self, X):
        X = check_query(X, self.means.shape[1])
        out = np.empty((X.shape[0], 2))
        for k in (0, 1):
            var = self.variances[k]
            dens = -0.5 * np.log(2.0 * np.pi * var) - (X - self.means[k]) ** 2 / (2.0 * var)
            out[:, k] = np.log(self.priors[k]) + dens.sum(axis=1)
        return out

    def predict(self, X):
        jll = self.joint_log_likelihood(X)
        # strict comparison: ties resolve to class 0
        return (jll[:, 1] > jll[:, 0]).astype(np.int64)


class KNeighbors:
    """Euclidean k-NN with majority vote.

    Neighbours are ranked by distance, then by training-row index. A split
    vote goes to the class of the single nearest neighbour.
    """

    def __init__(self, k=5, chunk=256):
        self.k = k
        self.chunk = chunk
        self.X = None
        self.y = None

    def fit(self, X, y):
        X, y = check_train(X, y)
        if self.k < 1:
            raise TrainingError("k must be >= 1")
        self.X, self.y = X, y
        return self

    @property
    def k_effective(self):
        return min(self.k, self.X.shape[0])

    def neighbors(self, X):
        X = check_query(X, self.X.shape[1])
        k = self.k_effective
        out = np.empty((X.shape[0], k), dtype=np.int64)
        for start in range(0, X.shape[0], self.chunk):
            q = X[start:start + self.chunk]
            d2 = ((q[:, None, :] - self.X[None, :, :]) ** 2).sum(axis=2)
            out[start:start + q.shape[0]] = np.argsort(d2, axis=1, kind="stable")[:, :k]
        return out

    def predict(self, X):
        idx = self.neighbors(X)
        labels = self.y[idx]
        ones = labels.sum(axis=1)
        k = idx.shape[1]
        pred = np.where(2 * ones > k, 1, 0)
        tie = 2 * ones == k
        pred[tie] = labels[tie, 0]
        return pred.astype(np.int64)
