"""Shared builders for tests."""

from fractions import Fraction

import numpy as np

from dndf.dataset import Cohort, PatientRecord


def make_record(i=0, **overrides):
    fields = dict(
        id=f"R{i}", age=50, sex="male", test_result="negative", confirmation_method="clinical",
        ventilator=False, cough=False, apnea=False, carcinoma=False, healthcare_staff=False,
        icu_hospitalization=False, outcome="recovered", hospitalization_days=3, extra_symptoms={},
    )
    fields.update(overrides)
    return PatientRecord(**fields)


def make_cohort(rows):
    """Cohort from a list of override dicts, ids assigned in order."""
    return Cohort(tuple(make_record(i, **r) for i, r in enumerate(rows)))


# brute-force oracles


def oracle_cart(X, y):
    """Exhaustive CART with exact Gini: every (feature, midpoint) is scored."""
    X = [[Fraction(v) for v in row] for row in X]
    y = list(y)

    def frac_gini(labels):
        n = len(labels)
        if n == 0:
            return Fraction(0)
        p = Fraction(sum(labels), n)
        return 1 - p * p - (1 - p) * (1 - p)

    def build(rows):
        labels = [y[i] for i in rows]
        leaf = ("leaf", 1 if 2 * sum(labels) >= len(labels) else 0)
        if len(rows) < 2 or len(set(labels)) == 1:
            return leaf
        best = None
        for f in range(len(X[0])):
            values = sorted({X[i][f] for i in rows})
            for a, b in zip(values, values[1:]):
                thr = (a + b) / 2
                left = [i for i in rows if X[i][f] <= thr]
                right = [i for i in rows if X[i][f] > thr]
                score = (len(left) * frac_gini([y[i] for i in left])
                         + len(right) * frac_gini([y[i] for i in right]))
                if best is None or score < best[0]:
                    best = (score, f, thr, left, right)
        if best is None:
            return leaf
        _, f, thr, left, right = best
        return (f, float(thr), build(left), build(right))

    return build(list(range(len(y))))


def oracle_predict(node, q):
    while node[0] != "leaf":
        f, thr, left, right = node
        node = left if q[f] <= thr else right
    return node[1]


def oracle_knn(X, y, q, k=5):
    k = min(k, len(y))
    ranked = sorted(range(len(y)), key=lambda i: (sum((a - b) ** 2 for a, b in zip(X[i], q)), i))
    votes = [y[i] for i in ranked[:k]]
    ones = sum(votes)
    if 2 * ones == k:
        return votes[0]
    return 1 if 2 * ones > k else 0


def instances(count, seed):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n = int(rng.integers(1, 9))
        p = int(rng.integers(1, 3))
        # small integer grid -> many ties and exact midpoints
        X = rng.integers(0, 4, size=(n, p)).astype(float)
        y = rng.integers(0, 2, size=n)
        yield X, y, rng
