import numpy as np

from ..errors import ShapeError, TrainingError


def check_train(X, y, *, both_classes=False):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2:
        raise ShapeError(f"training matrix must be 2-D, got shape {X.shape}")
    if X.shape[0] == 0:
        raise TrainingError("training set is empty")
    if y.shape != (X.shape[0],):
        raise ShapeError(f"labels of shape {y.shape} for {X.shape[0]} rows")
    if not np.all((y == 0) | (y == 1)):
        raise TrainingError("labels must be 0 or 1")
    if both_classes and np.unique(y).size < 2:
        raise TrainingError(f"training set holds a single class ({int(y[0])})")
    return X, y


def check_query(X, n_features):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != n_features:
        raise ShapeError(f"expected queries of shape [n, {n_features}], got {X.shape}")
    return X


def majority(y) -> int:
    """Most frequent label; ties go to class 1."""
    ones = int(np.sum(y))
    return 1 if 2 * ones >= len(y) else 0
