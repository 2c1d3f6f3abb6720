"""The seven classical comparison models, written from scratch.

Each class exposes ``fit(X, y)`` and ``predict(X)``. The ``*_fit_predict``
helpers take a training :class:`~dndf.preprocess.DesignMatrix` and a query
matrix and return 0/1 labels.
"""

from .linear import LinearSVM, LogisticRegression, logistic
from .neighbors import GaussianNB, KNeighbors
from .trees import AdaBoost, DecisionTree, RandomForest, best_stump, gini, stage_weight


def make_baseline(name: str, seed: int = 0):
    """Fresh, unfitted model for a registry name."""
    factories = {
        "gnb": GaussianNB,
        "knn": lambda: KNeighbors(k=5),
        "logreg": lambda: LogisticRegression(learning_rate=0.1, iterations=1000),
        "cart": DecisionTree,
        "rf": lambda: RandomForest(n_trees=100, seed=seed),
        "svm": lambda: LinearSVM(lam=1e-4, epochs=100, seed=seed),
        "adaboost": lambda: AdaBoost(n_rounds=50),
    }
    if name not in factories:
        raise KeyError(f"unknown baseline {name!r}")
    return factories[name]()


BASELINE_NAMES = ("gnb", "knn", "logreg", "cart", "rf", "svm", "adaboost")


def _fit_predict(name, train, X, seed=0):
    return make_baseline(name, seed).fit(train.X, train.y).predict(X)


def logreg_fit_predict(train, X):
    return _fit_predict("logreg", train, X)


def gnb_fit_predict(train, X):
    return _fit_predict("gnb", train, X)


def knn_fit_predict(train, X):
    return _fit_predict("knn", train, X)


def cart_fit_predict(train, X):
    return _fit_predict("cart", train, X)


def rf_fit_predict(train, X, seed=0):
    return _fit_predict("rf", train, X, seed)


def adaboost_fit_predict(train, X):
    return _fit_predict("adaboost", train, X)


def svm_fit_predict(train, X, seed=0):
    return _fit_predict("svm", train, X, seed)


__all__ = [
    "AdaBoost", "DecisionTree", "GaussianNB", "KNeighbors", "LinearSVM", "LogisticRegression",
    "RandomForest", "BASELINE_NAMES", "best_stump", "gini", "logistic", "make_baseline",
    "stage_weight", "logreg_fit_predict", "gnb_fit_predict", "knn_fit_predict",
    "cart_fit_predict", "rf_fit_predict", "adaboost_fit_predict", "svm_fit_predict",
]
