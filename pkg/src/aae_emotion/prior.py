"""Gaussian-mixture prior over the code space, one component per class."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ShapeError, ValidationError


@dataclass(frozen=True)
class GaussianComponent:
    mean: np.ndarray
    stddev: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        std = np.asarray(self.stddev, dtype=np.float64).reshape(-1)
        if std.size == 1 and mean.size > 1:
            std = np.full(mean.size, float(std[0]))
        if mean.shape != std.shape:
            raise ShapeError(f"mean length {mean.size} != stddev length {std.size}")
        if not np.all(std > 0):
            raise ValidationError("component stddev entries must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "stddev", std)

    def log_density(self, z):
        z = np.asarray(z, dtype=np.float64)
        u = (z - self.mean) / self.stddev
        return (
            -0.5 * np.sum(u * u, axis=-1)
            - np.sum(np.log(self.stddev))
            - 0.5 * self.mean.size * np.log(2.0 * np.pi)
        )


class MixturePrior:
    """Equally weighted diagonal Gaussian mixture with labelled components.

    ``labels[i]`` names the class bound to ``components[i]``.
    """

    def __init__(self, components, labels):
        components = list(components)
        labels = [str(l) for l in labels]
        if not components:
            raise ValidationError("a mixture prior needs at least one component")
        if len(components) != len(labels):
            raise ValidationError(
                f"{len(components)} components but {len(labels)} class labels"
            )
        if len(set(labels)) != len(labels):
            raise ValidationError("class labels of a prior must be distinct")
        dims = {c.mean.size for c in components}
        if len(dims) != 1:
            raise ShapeError("all components must live in the same code dimension")
        self.components = components
        self.labels = labels
        self.code_dim = dims.pop()
        self._index = {l: i for i, l in enumerate(labels)}
        self.means = np.stack([c.mean for c in components])
        self.stddevs = np.stack([c.stddev for c in components])

    @property
    def n_components(self):
        return len(self.components)

    def component_index(self, label):
        try:
            return self._index[str(label)]
        except KeyError:
            raise ValidationError(f"unknown class label {label!r} for this prior")

    def sample(self, label, n, rng):
        """Draw ``n`` i.i.d. codes from the component bound to ``label``."""
        if n < 1:
            raise ValidationError(f"sample count must be >= 1, got {n}")
        i = self.component_index(label)
        eps = rng.standard_normal((n, self.code_dim))
        return self.means[i] + self.stddevs[i] * eps

    def sample_for_labels(self, labels, rng):
        """One code per entry of ``labels``, each from its own class component."""
        idx = np.array([self.component_index(l) for l in labels], dtype=int)
        eps = rng.standard_normal((idx.size, self.code_dim))
        return self.means[idx] + self.stddevs[idx] * eps

    def log_density(self, z):
        """Log density of the uniform-weight mixture at ``z`` (vector or rows)."""
        z = np.asarray(z, dtype=np.float64)
        if z.shape[-1] != self.code_dim:
            raise ShapeError(f"code length {z.shape[-1]} != prior dimension {self.code_dim}")
        parts = np.stack([c.log_density(z) for c in self.components], axis=-1)
        return logsumexp(parts, axis=-1) - np.log(self.n_components)

    def nearest_component(self, codes):
        """Index of the closest component mean (Euclidean) for each code row."""
        codes = np.atleast_2d(np.asarray(codes, dtype=np.float64))
        d2 = ((codes[:, None, :] - self.means[None, :, :]) ** 2).sum(axis=-1)
        return d2.argmin(axis=1)

    def reordered(self, labels):
        """Same prior with components listed in the order of ``labels``."""
        idx = [self.component_index(l) for l in labels]
        return MixturePrior([self.components[i] for i in idx], [self.labels[i] for i in idx])

    def to_dict(self):
        return {
            "labels": list(self.labels),
            "means": self.means.tolist(),
            "stddevs": self.stddevs.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        comps = [GaussianComponent(m, s) for m, s in zip(d["means"], d["stddevs"])]
        return cls(comps, d["labels"])


def default_layout(labels, code_dim=2, radius=4.0, stddev=0.5):
    """Place one isotropic component per label on a circle.

    Component ``c`` of ``C`` sits at angle ``2*pi*c/C`` in the first two code
    coordinates; any further coordinates are zero. With ``code_dim == 1`` the
    means are spread evenly over ``[-radius, radius]``.
    """
    if isinstance(labels, (int, np.integer)):
        labels = [str(i) for i in range(int(labels))]
    labels = list(labels)
    n = len(labels)
    if n < 1:
        raise ValidationError("need at least one class")
    if code_dim < 1:
        raise ValidationError(f"code_dim must be >= 1, got {code_dim}")
    if not radius > 0:
        raise ValidationError(f"radius must be positive, got {radius}")
    if not stddev > 0:
        raise ValidationError(f"stddev must be positive, got {stddev}")
    means = np.zeros((n, code_dim))
    if code_dim == 1:
        means[:, 0] = np.linspace(-radius, radius, n) if n > 1 else radius
    else:
        angles = 2.0 * np.pi * np.arange(n) / n
        means[:, 0] = radius * np.cos(angles)
        means[:, 1] = radius * np.sin(angles)
        # cos(pi/2) is 6e-17, not 0
        means[np.abs(means) < 1e-12 * radius] = 0.0
    comps = [GaussianComponent(m, np.full(code_dim, stddev)) for m in means]
    return MixturePrior(comps, labels)
