"""Logistic regression (full-batch gradient descent) and a linear SVM (Pegasos)."""

from __future__ import annotations

import numpy as np

from ._common import check_query, check_train


def logistic(z):
    """P = exp(z) / (1 + exp(z)), evaluated without overflow."""
    z = np.asarray(z, dtype=np.float64)
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class LogisticRegression:
    def __init__(self, learning_rate=0.1, iterations=1000):
        self.learning_rate = learning_rate
        self.iterations = iterations
        self.beta0 = 0.0
        self.beta = None

    def fit(self, X, y):
        X, y = check_train(X, y, both_classes=True)
        n, p = X.shape
        beta0, beta = 0.0, np.zeros(p)
        for _ in range(self.iterations):
            err = logistic(beta0 + X @ beta) - y
            beta0 -= self.learning_rate * err.mean()
            beta = beta - self.learning_rate * (X.T @ err) / n
        self.beta0, self.beta = beta0, beta
        return self

    def predict_proba(self, X):
        X = check_query(X, self.beta.size)
        return logistic(self.beta0 + X @ self.beta)

    def predict(self, X):
        return (self.predict_proba(X) >= 0.5).astype(np.int64)


class LinearSVM:
    """Hinge-loss SVM trained by Pegasos stochastic subgradient steps.

    A constant 1 column is appended, so the bias is regularized along with the
    weights. Step size at update ``t`` is ``1 / (lam * t)``.
    """

    def __init__(self, lam=1e-4, epochs=100, seed=0):
        self.lam = lam
        self.epochs = epochs
        self.seed = seed
        self.w = None
        self.b = 0.0

    def fit(self, X, y):
        X, y = check_train(X, y, both_classes=True)
        Xa = np.hstack([X, np.ones((X.shape[0], 1))])
        s = np.where(y == 1, 1.0, -1.0)
        rng = np.random.default_rng(self.seed)
        w = np.zeros(Xa.shape[1])
        t = 0
        for _ in range(self.epochs):
            for i in rng.permutation(Xa.shape[0]):
                t += 1
                eta = 1.0 / (self.lam * t)
                violated = s[i] * (w @ Xa[i]) < 1.0
                w *= 1.0 - eta * self.lam
                if violated:
                    w += eta * s[i] * Xa[i]
        self.w, self.b = w[:-1], float(w[-1])
        return self

    def decision_function(self, X):
        X = check_query(X, self.w.size)
        return X @ self.w + self.b

    def predict(self, X):
        return (self.decision_function(X) >= 0).astype(np.int64)
