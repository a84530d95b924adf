"""Confusion matrices, unweighted average recall, and a two-proportion z-test."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass
class ConfusionMatrix:
    """Counts with rows = true label, columns = predicted label."""

    counts: np.ndarray
    labels: list

    @property
    def recalls(self):
        rows = self.counts.sum(axis=1)
        empty = [self.labels[i] for i in np.flatnonzero(rows == 0)]
        if empty:
            raise ValidationError(f"no test rows for class(es) {empty}; recall undefined")
        return np.diag(self.counts) / rows

    @property
    def total(self):
        return int(self.counts.sum())

    @property
    def correct(self):
        return int(np.trace(self.counts))

    def __add__(self, other):
        if list(other.labels) != list(self.labels):
            raise ValidationError("cannot add confusion matrices over different labels")
        return ConfusionMatrix(self.counts + other.counts, list(self.labels))


def confusion(true_labels, predicted_labels, labels):
    true_labels = np.asarray(true_labels).astype(str)
    predicted_labels = np.asarray(predicted_labels).astype(str)
    if true_labels.shape != predicted_labels.shape:
        raise ValidationError("true and predicted label lists differ in length")
    labels = [str(l) for l in labels]
    index = {l: i for i, l in enumerate(labels)}
    unknown = sorted(set(true_labels.tolist()) - index.keys()) + sorted(
        set(predicted_labels.tolist()) - index.keys()
    )
    if unknown:
        raise ValidationError(f"labels not in the label order: {sorted(set(unknown))}")
    t = np.array([index[l] for l in true_labels], dtype=int)
    p = np.array([index[l] for l in predicted_labels], dtype=int)
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    return ConfusionMatrix(counts, labels)


def uar(cm: ConfusionMatrix) -> float:
    """Mean per-class recall."""
    return float(np.mean(cm.recalls))


def two_proportion_test(correct_a, n_a, correct_b, n_b):
    """Two-sided pooled two-proportion z-test; returns the p-value."""
    for c, n in ((correct_a, n_a), (correct_b, n_b)):
        if n <= 0 or not 0 <= c <= n or int(c) != c or int(n) != n:
            raise ValidationError(f"invalid counts {c}/{n}")
    pa, pb = correct_a / n_a, correct_b / n_b
    pooled = (correct_a + correct_b) / (n_a + n_b)
    var = pooled * (1.0 - pooled) * (1.0 / n_a + 1.0 / n_b)
    if var == 0.0:
        return 1.0
    z = (pa - pb) / math.sqrt(var)
    return math.erfc(abs(z) / math.sqrt(2.0))
