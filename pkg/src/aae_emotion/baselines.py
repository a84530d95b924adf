"""Dimensionality-reduction baselines: PCA, LDA and a plain auto-encoder."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg

from . import container
from .aae import (
    AaeConfig,
    EpochLog,
    _AutoencoderBase,
    _epoch_streams,
    _hidden_net,
    plateaued,
    split_rng,
)
from .errors import DegenerateInputError, DivergedTrainingError, ShapeError, ValidationError
from .linalg import canonical_signs, jacobi_eigh, symmetric_eigh

# -- PCA ---------------------------------------------------------------------


@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray

    @property
    def n_components(self):
        return self.components.shape[1]

    def project(self, features):
        x = np.asarray(features, dtype=np.float64)
        if x.shape[-1] != self.mean.size:
            raise ShapeError(f"expected {self.mean.size} features, got {x.shape[-1]}")
        return (x - self.mean) @ self.components

    def reconstruct(self, projections):
        p = np.asarray(projections, dtype=np.float64)
        if p.shape[-1] != self.n_components:
            raise ShapeError(f"expected {self.n_components} coordinates, got {p.shape[-1]}")
        return p @ self.components.T + self.mean

    def save(self, path):
        container.write_container(
            path, "pca", {"D": int(self.mean.size), "d": self.n_components},
            {"mean": self.mean, "components": self.components, "eigenvalues": self.eigenvalues},
        )

    @classmethod
    def load(cls, path):
        _, arr = container.read_container(path, expect_kind="pca")
        return cls(arr["mean"], arr["components"], arr["eigenvalues"])


def pca_fit(features, d, solver="lapack"):
    """Top-``d`` principal axes of the sample covariance (divisor N-1).

    ``solver="jacobi"`` uses the pure-Python rotation solver, only sensible
    for small D.
    """
    x = np.asarray(features, dtype=np.float64)
    n, dim = x.shape
    if n < 2:
        raise ValidationError("pca_fit needs at least 2 rows")
    if not 1 <= d <= min(n, dim):
        raise ValidationError(f"d must lie in [1, {min(n, dim)}], got {d}")
    mean = x.mean(axis=0)
    xc = x - mean
    constant = np.flatnonzero(np.ptp(x, axis=0) == 0)
    if constant.size == dim:
        raise DegenerateInputError(
            f"all features have zero variance (constant features: {constant.tolist()})"
        )
    cov = xc.T @ xc / (n - 1)
    w, v = jacobi_eigh(cov) if solver == "jacobi" else symmetric_eigh(cov)
    w = np.maximum(w, 0.0)
    return PcaModel(mean, v[:, :d], w[:d])


def pca_project(model, features):
    return model.project(features)


def pca_reconstruct(model, projections):
    return model.reconstruct(projections)


# -- LDA ---------------------------------------------------------------------


@dataclass
class LdaModel:
    mean: np.ndarray
    projection: np.ndarray
    eigenvalues: np.ndarray
    classes: list

    @property
    def n_components(self):
        return self.projection.shape[1]

    def project(self, features):
        x = np.asarray(features, dtype=np.float64)
        if x.shape[-1] != self.mean.size:
            raise ShapeError(f"expected {self.mean.size} features, got {x.shape[-1]}")
        return (x - self.mean) @ self.projection

    def save(self, path):
        container.write_container(
            path, "lda", {"D": int(self.mean.size), "d": self.n_components, "classes": self.classes},
            {"mean": self.mean, "projection": self.projection, "eigenvalues": self.eigenvalues},
        )

    @classmethod
    def load(cls, path):
        header, arr = container.read_container(path, expect_kind="lda")
        return cls(arr["mean"], arr["projection"], arr["eigenvalues"], header["classes"])


def scatter_matrices(features, labels):
    """Within-class and between-class scatter (sums, not averages)."""
    x = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels).astype(str)
    mean = x.mean(axis=0)
    dim = x.shape[1]
    sw = np.zeros((dim, dim))
    sb = np.zeros((dim, dim))
    for c in sorted(set(labels.tolist())):
        xc = x[labels == c]
        mc = xc.mean(axis=0)
        dc = xc - mc
        sw += dc.T @ dc
        diff = (mc - mean)[:, None]
        sb += len(xc) * (diff @ diff.T)
    return sw, sb


def lda_fit(features, labels, d, reg=1e-6):
    """Fisher discriminant directions: top generalised eigenvectors of (S_b, S_w).

    ``S_w`` gets ``reg * trace(S_w) / D`` added to its diagonal so the
    problem stays well posed when D exceeds the sample count. Columns are
    S_w-orthonormal with canonical signs.
    """
    x = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels).astype(str)
    if len(labels) != len(x):
        raise ShapeError("labels and features disagree on row count")
    classes = sorted(set(labels.tolist()))
    if len(classes) < 2:
        raise ValidationError("lda_fit needs at least 2 classes")
    small = [c for c in classes if np.sum(labels == c) < 2]
    if small:
        raise ValidationError(f"classes with fewer than 2 rows: {small}")
    if not 1 <= d <= len(classes) - 1:
        raise ValidationError(f"d must lie in [1, {len(classes) - 1}] for {len(classes)} classes, got {d}")
    sw, sb = scatter_matrices(x, labels)
    dim = x.shape[1]
    lam = reg * np.trace(sw) / dim
    if lam <= 0:
        lam = reg
    sw_reg = sw + lam * np.eye(dim)
    w, v = scipy.linalg.eigh(0.5 * (sb + sb.T), 0.5 * (sw_reg + sw_reg.T))
    order = np.argsort(-w, kind="stable")[:d]
    return LdaModel(x.mean(axis=0), canonical_signs(v[:, order]), w[order], classes)


def lda_project(model, features):
    return model.project(features)


# -- vanilla auto-encoder ------------------------------------------------------


class VanillaAutoencoder(_AutoencoderBase):
    """Encoder/decoder trained on reconstruction only.

    Built and trained with the same random-stream layout as
    :class:`~aae_emotion.aae.AdversarialAutoencoder`, so for a given seed it
    follows the same trajectory as an adversarial model whose adversarial
    learning rates are zero.
    """

    def __init__(self, encoder, decoder, config):
        self.encoder = encoder
        self.decoder = decoder
        self.config = config
        self._opt_recon = None
        self.epochs_trained = 0

    @classmethod
    def build(cls, config, rng):
        w, depth, rate = config.hidden_width, config.hidden_depth, config.dropout_rate
        enc = _hidden_net(config.input_dim, w, depth, config.code_dim, "identity", rate, rng)
        dec = _hidden_net(config.code_dim, w, depth, config.input_dim, "identity", rate, rng)
        return cls(enc, dec, config)

    def train_epoch(self, features, rng) -> EpochLog:
        x = self._check_features(features)
        shuffle_rng, recon_rng, _ = _epoch_streams(rng)
        order = shuffle_rng.permutation(len(x))
        bs = self.config.batch_size
        total = 0.0
        epoch = self.epochs_trained + 1
        try:
            for start in range(0, len(x), bs):
                b = order[start : start + bs]
                total += len(b) * self.reconstruction_step(x[b], recon_rng)
        except DivergedTrainingError as exc:
            exc.epoch = epoch
            raise
        self.epochs_trained = epoch
        return EpochLog(epoch, "train", total / len(x), float("nan"), float("nan"))

    def fit(self, features, rng, epochs=None):
        epochs = self.config.epochs if epochs is None else epochs
        logs, recon = [], []
        for _ in range(epochs):
            log = self.train_epoch(features, rng)
            logs.append(log)
            recon.append(log.recon_mse)
            if log.recon_mse > self.config.divergence_factor * recon[0]:
                raise DivergedTrainingError(
                    "reconstruction MSE exploded", phase="reconstruction", epoch=log.epoch
                )
            if plateaued(recon, self.config.plateau_patience, self.config.plateau_tol):
                break
        return logs

    def save(self, path):
        header = {"config": asdict(self.config), "networks": {}}
        arrays = {}
        for name in ("encoder", "decoder"):
            layers, arr = container.network_to_parts(getattr(self, name), name)
            header["networks"][name] = layers
            arrays.update(arr)
        container.write_container(path, "vanilla_ae", header, arrays)

    @classmethod
    def load(cls, path):
        header, arrays = container.read_container(path, expect_kind="vanilla_ae")
        enc = container.network_from_parts(header["networks"]["encoder"], arrays, "encoder")
        dec = container.network_from_parts(header["networks"]["decoder"], arrays, "decoder")
        return cls(enc, dec, AaeConfig(**header["config"]))


def vanilla_ae_fit(features, config, rng, epochs=None):
    """Build and train a :class:`VanillaAutoencoder`; returns ``(model, logs)``.

    Uses the same init/train generator split as :func:`aae_emotion.aae.fit_aae`.
    """
    init_rng, train_rng = split_rng(rng)
    model = VanillaAutoencoder.build(config, init_rng)
    logs = model.fit(features, train_rng, epochs)
    return model, logs


def vanilla_ae_encode(model, features):
    return model.encode(features)
