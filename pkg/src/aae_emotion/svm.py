"""Kernel SVM trained with simplified SMO, and a one-vs-one multi-class wrapper."""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, ValidationError


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "linear"
    gamma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("linear", "rbf"):
            raise ValidationError(f"kernel must be 'linear' or 'rbf', got {self.kind!r}")
        if self.kind == "rbf" and not self.gamma > 0:
            raise ValidationError(f"rbf gamma must be positive, got {self.gamma}")

    def __call__(self, a, b):
        a = np.atleast_2d(np.asarray(a, dtype=np.float64))
        b = np.atleast_2d(np.asarray(b, dtype=np.float64))
        if self.kind == "linear":
            return a @ b.T
        d2 = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * (a @ b.T)
        return np.exp(-self.gamma * np.maximum(d2, 0.0))

    def describe(self):
        return "linear" if self.kind == "linear" else f"rbf(gamma={self.gamma:.6g})"


class ConvergenceWarning(UserWarning):
    pass


@dataclass
class BinarySvm:
    """Fitted two-class SVM; labels are +1 / -1."""

    support_vectors: np.ndarray
    alphas: np.ndarray
    targets: np.ndarray
    bias: float
    kernel: KernelSpec
    box: float
    converged: bool = True
    # full training-set duals, kept for diagnostics (KKT, dual objective)
    train_alphas: np.ndarray = field(default=None, repr=False)

    def decision_function(self, features):
        x = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if x.shape[1] != self.support_vectors.shape[1]:
            raise ShapeError(
                f"expected {self.support_vectors.shape[1]} features, got {x.shape[1]}"
            )
        if len(self.alphas) == 0:
            return np.full(len(x), self.bias)
        return self.kernel(x, self.support_vectors) @ (self.alphas * self.targets) + self.bias

    def predict(self, features):
        return np.where(self.decision_function(features) >= 0.0, 1, -1)


def dual_objective(alphas, targets, gram):
    """SVM dual ``sum(a) - 1/2 (a*y)^T K (a*y)``."""
    ay = alphas * targets
    return float(alphas.sum() - 0.5 * ay @ gram @ ay)


def kkt_violations(alphas, targets, gram, bias, box, tol):
    """Per-point KKT violation amounts (0 where satisfied within ``tol``)."""
    f = gram @ (alphas * targets) + bias
    m = targets * f
    viol = np.zeros_like(m)
    at_zero = alphas <= 0.0
    at_box = alphas >= box
    free = ~(at_zero | at_box)
    viol[at_zero] = np.maximum(0.0, (1.0 - tol) - m[at_zero])
    viol[at_box] = np.maximum(0.0, m[at_box] - (1.0 + tol))
    viol[free] = np.maximum(0.0, np.abs(m[free] - 1.0) - tol)
    return viol


def svm_fit(features, labels, kernel=KernelSpec(), box=1.0, tol=1e-3, max_passes=100):
    """SMO on the dual with maximal-violating-pair working-set selection.

    ``labels`` are two-valued; the larger value maps to +1. Each iteration
    picks the pair with the widest KKT gap and solves the two-variable
    sub-problem in closed form. Training stops when the gap falls below
    ``tol`` or after ``max_passes * N`` pair updates, in which case a
    :class:`ConvergenceWarning` is issued and the last iterate returned.
    """
    x = np.asarray(features, dtype=np.float64)
    y_raw = np.asarray(labels)
    if x.ndim != 2 or len(x) != len(y_raw):
        raise ShapeError("features must be (N, D) with one label per row")
    uniq = np.unique(y_raw)
    if len(uniq) != 2:
        raise ValidationError(f"svm_fit needs exactly two classes, got {len(uniq)}")
    if not box > 0:
        raise ValidationError(f"box constraint must be positive, got {box}")
    y = np.where(y_raw == uniq[1], 1.0, -1.0)
    n = len(x)
    gram = kernel(x, x)
    diag = np.diag(gram).copy()
    alpha = np.zeros(n)
    # f(x_t) - y_t without the bias term
    err = -y.copy()
    pos = y > 0
    converged = False
    for _ in range(max_passes * n):
        below = alpha < box
        above = alpha > 0.0
        up = (below & pos) | (above & ~pos)
        low = (below & ~pos) | (above & pos)
        e_up = np.where(up, err, np.inf)
        e_low = np.where(low, err, -np.inf)
        i = int(np.argmin(e_up))
        j = int(np.argmax(e_low))
        if e_low[j] - e_up[i] < tol:
            converged = True
            break
        yi, yj = y[i], y[j]
        ai, aj = alpha[i], alpha[j]
        if yi != yj:
            lo, hi = max(0.0, aj - ai), min(box, box + aj - ai)
        else:
            lo, hi = max(0.0, ai + aj - box), min(box, ai + aj)
        eta = max(diag[i] + diag[j] - 2.0 * gram[i, j], 1e-12)
        aj_new = min(hi, max(lo, aj + yj * (err[i] - err[j]) / eta))
        ai_new = ai + yi * yj * (aj - aj_new)
        if ai_new < 1e-12 * box:
            ai_new = 0.0
        elif ai_new > box * (1.0 - 1e-12):
            ai_new = box
        dai, daj = ai_new - ai, aj_new - aj
        err += yi * dai * gram[:, i] + yj * daj * gram[:, j]
        alpha[i], alpha[j] = ai_new, aj_new
    if not converged:
        warnings.warn(
            f"SMO hit {max_passes * n} updates without closing the KKT gap to {tol}",
            ConvergenceWarning,
            stacklevel=2,
        )
    free = (alpha > 0.0) & (alpha < box)
    if free.any():
        b = float(-np.mean(err[free]))
    else:
        below, above = alpha < box, alpha > 0.0
        up = (below & pos) | (above & ~pos)
        low = (below & ~pos) | (above & pos)
        b = float(-0.5 * (err[up].min() + err[low].max()))
    sv = alpha > 0.0
    return BinarySvm(x[sv], alpha[sv], y[sv], b, kernel, float(box), converged,
                     train_alphas=alpha)


class MulticlassSvm:
    """One-vs-one SVM with majority vote.

    Vote ties go to the label with the largest sum of ``|decision value|``
    over the pairwise contests it won, then to the earlier label in
    ``labels``.
    """

    def __init__(self, labels, models):
        self.labels = [str(l) for l in labels]
        self.models = dict(models)
        expected = len(self.labels) * (len(self.labels) - 1) // 2
        if len(self.models) != expected:
            raise ValidationError(f"need {expected} pairwise models, got {len(self.models)}")

    @classmethod
    def fit(cls, features, labels, kernel=KernelSpec(), box=1.0, tol=1e-3, max_passes=100,
            label_order=None):
        x = np.asarray(features, dtype=np.float64)
        labels = np.asarray(labels).astype(str)
        order = sorted(set(labels.tolist())) if label_order is None else list(label_order)
        if len(order) < 2:
            raise ValidationError("multi-class SVM needs at least 2 classes in training data")
        models = {}
        for a, b in itertools.combinations(range(len(order)), 2):
            mask = (labels == order[a]) | (labels == order[b])
            y = np.where(labels[mask] == order[a], 1, -1)
            models[(a, b)] = svm_fit(x[mask], y, kernel, box, tol, max_passes)
        return cls(order, models)

    def votes(self, features):
        x = np.atleast_2d(np.asarray(features, dtype=np.float64))
        c = len(self.labels)
        votes = np.zeros((len(x), c), dtype=int)
        strength = np.zeros((len(x), c))
        for (a, b), model in sorted(self.models.items()):
            f = model.decision_function(x)
            win_a = f >= 0.0
            votes[win_a, a] += 1
            votes[~win_a, b] += 1
            strength[win_a, a] += np.abs(f[win_a])
            strength[~win_a, b] += np.abs(f[~win_a])
        return votes, strength

    def predict(self, features):
        votes, strength = self.votes(features)
        out = []
        for v, s in zip(votes, strength):
            best = np.flatnonzero(v == v.max())
            if len(best) > 1:
                top = s[best].max()
                best = best[s[best] == top]
            out.append(self.labels[best[0]])
        return np.array(out)


def svm_predict(model: MulticlassSvm, features):
    return model.predict(features)
