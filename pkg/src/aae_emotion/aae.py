"""Adversarial auto-encoder with class-label regularisation of the code space.

Each minibatch runs three phases in order:

1. reconstruction: encoder and decoder take a step on MSE(x, decoder(encoder(x)));
2. discriminator: encoder codes (target 0) and an equal number of prior draws
   (target 1), each concatenated with the one-hot class of its row, train the
   discriminator on binary cross-entropy;
3. generator: with the discriminator frozen, the encoder takes a step towards
   having its codes classified as prior draws.

Each phase owns its optimizer state, so switching a phase off (learning
rate 0) leaves the other phases' trajectories untouched.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import container
from .data import SYNTHETIC_SESSION, Dataset, Standardizer
from .errors import DivergedTrainingError, ShapeError, ValidationError
from .nn import Network, apply_update, binary_cross_entropy, make_optimizer, mse_loss
from .prior import MixturePrior

LN2 = math.log(2.0)


@dataclass
class AaeConfig:
    input_dim: int
    code_dim: int = 2
    hidden_width: int = 1000
    hidden_depth: int = 2
    dropout_rate: float = 0.5
    batch_size: int = 64
    epochs: int = 100
    optimizer: str = "adam"
    recon_lr: float = 1e-4
    disc_lr: float = 1e-4
    gen_lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    phase2_updates_encoder: bool = False
    # discriminator target for prior draws; encoder codes get the other value
    synthetic_target: int = 1
    plateau_patience: int = 0
    plateau_tol: float = 1e-4
    divergence_factor: float = 10.0
    seed: int = 0

    def __post_init__(self):
        for name in ("input_dim", "code_dim", "hidden_width", "hidden_depth", "batch_size", "epochs"):
            if int(getattr(self, name)) < 1:
                raise ValidationError(f"{name} must be a positive integer")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValidationError("dropout_rate must lie in [0, 1)")
        if self.synthetic_target not in (0, 1):
            raise ValidationError("synthetic_target must be 0 or 1")
        for name in ("recon_lr", "disc_lr", "gen_lr"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0")

    def _optimizer(self, lr):
        kwargs = {"beta1": self.beta1, "beta2": self.beta2} if self.optimizer == "adam" else {}
        return make_optimizer(self.optimizer, lr, **kwargs)


@dataclass
class EpochLog:
    epoch: int
    split: str
    recon_mse: float
    discriminator_ce: float
    generator_ce: float


EPOCH_LOG_COLUMNS = ("epoch", "split", "recon_mse", "discriminator_ce", "generator_ce")


def write_epoch_logs(logs, path):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EPOCH_LOG_COLUMNS)
        for log in logs:
            w.writerow(
                [log.epoch, log.split]
                + [format(getattr(log, c), ".17g") for c in EPOCH_LOG_COLUMNS[2:]]
            )


def read_epoch_logs(path):
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        EpochLog(int(r["epoch"]), r["split"], float(r["recon_mse"]),
                 float(r["discriminator_ce"]), float(r["generator_ce"]))
        for r in rows
    ]


def _hidden_net(dims_in, width, depth, dims_out, out_act, rate, rng):
    dims = [dims_in] + [width] * depth + [dims_out]
    acts = ["relu"] * depth + [out_act]
    drops = [rate] * depth + [0.0]
    return Network.build(dims, acts, drops, rng)


def _epoch_streams(rng):
    """Independent generators for shuffling, reconstruction dropout, adversarial draws."""
    seeds = rng.integers(0, 2**63 - 1, size=3)
    return [np.random.default_rng(int(s)) for s in seeds]


def _check_loss(value, phase, epoch=None):
    if not np.isfinite(value):
        raise DivergedTrainingError(f"non-finite {phase} loss", phase=phase, epoch=epoch)


class _AutoencoderBase:
    """Encoder/decoder pair plus the reconstruction phase shared with the vanilla AE."""

    encoder: Network
    decoder: Network
    config: AaeConfig

    def _recon_optimizer(self):
        if getattr(self, "_opt_recon", None) is None:
            self._opt_recon = self.config._optimizer(self.config.recon_lr)
        return self._opt_recon

    def reconstruction_step(self, x, rng):
        """Phase 1: one optimizer step of encoder+decoder on MSE. Returns the loss."""
        code, enc_cache = self.encoder.forward(x, "train", rng)
        recon, dec_cache = self.decoder.forward(code, "train", rng)
        loss, g = mse_loss(recon, x)
        _check_loss(loss, "reconstruction")
        g_dec = self.decoder.backward(dec_cache, g)
        g_enc = self.encoder.backward(enc_cache, g_dec.inputs)
        apply_update([self.encoder, self.decoder], [g_enc, g_dec], self._recon_optimizer())
        return loss

    def _check_features(self, features):
        x = np.asarray(features, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[1] != self.config.input_dim:
            raise ShapeError(f"expected {self.config.input_dim} features, got {x.shape[1]}")
        return x

    def encode(self, features):
        """Code vectors for ``features`` (eval mode, deterministic)."""
        return self.encoder.predict(self._check_features(features))

    def decode(self, codes):
        """Feature vectors reconstructed from ``codes`` (eval mode, deterministic)."""
        z = np.asarray(codes, dtype=np.float64)
        if z.ndim == 1:
            z = z[None, :]
        if z.shape[1] != self.decoder.input_dim:
            raise ShapeError(f"expected codes of length {self.decoder.input_dim}, got {z.shape[1]}")
        return self.decoder.predict(z)

    def reconstruction_error(self, features):
        x = self._check_features(features)
        return mse_loss(self.decode(self.encode(x)), x)[0]


class AdversarialAutoencoder(_AutoencoderBase):
    """Encoder, decoder and label-conditioned discriminator around a mixture prior."""

    def __init__(self, encoder, decoder, discriminator, prior, config, class_labels,
                 feature_names=None, standardizer=None):
        self.encoder = encoder
        self.decoder = decoder
        self.discriminator = discriminator
        self.prior = prior
        self.config = config
        self.class_labels = [str(c) for c in class_labels]
        self.feature_names = list(feature_names) if feature_names else [
            f"f{j}" for j in range(config.input_dim)
        ]
        self.standardizer = standardizer
        # sessions the model was trained on, if known; used to tag encode output
        self.train_sessions = None
        self._label_index = {c: i for i, c in enumerate(self.class_labels)}
        self._opt_recon = self._opt_disc = self._opt_gen = None
        self.epochs_trained = 0
        self._validate()

    def _validate(self):
        k, d, c = self.config.code_dim, self.config.input_dim, len(self.class_labels)
        if self.encoder.input_dim != d or self.decoder.output_dim != d:
            raise ValidationError("encoder input / decoder output must equal input_dim")
        if self.encoder.output_dim != k or self.decoder.input_dim != k:
            raise ValidationError("encoder output / decoder input must equal code_dim")
        if self.prior.code_dim != k:
            raise ValidationError(f"prior dimension {self.prior.code_dim} != code_dim {k}")
        if self.prior.n_components != c:
            raise ValidationError(
                f"prior has {self.prior.n_components} components for {c} classes"
            )
        if list(self.prior.labels) != self.class_labels:
            raise ValidationError("prior component labels must follow class_labels order")
        if self.discriminator.input_dim != k + c or self.discriminator.output_dim != 1:
            raise ValidationError(f"discriminator must map {k + c} inputs to 1 output")

    @classmethod
    def build(cls, config, class_labels, prior, rng, feature_names=None):
        """Fresh model; networks are initialised from ``rng`` in the order encoder, decoder, discriminator."""
        class_labels = [str(c) for c in class_labels]
        if prior.code_dim != config.code_dim:
            raise ValidationError(f"prior dimension {prior.code_dim} != code_dim {config.code_dim}")
        if prior.n_components != len(class_labels):
            raise ValidationError(
                f"prior has {prior.n_components} components for {len(class_labels)} classes"
            )
        if set(prior.labels) != set(class_labels):
            raise ValidationError("prior component labels differ from class labels")
        prior = prior.reordered(class_labels)
        w, depth, rate = config.hidden_width, config.hidden_depth, config.dropout_rate
        k, d, c = config.code_dim, config.input_dim, len(class_labels)
        enc = _hidden_net(d, w, depth, k, "identity", rate, rng)
        dec = _hidden_net(k, w, depth, d, "identity", rate, rng)
        disc = _hidden_net(k + c, w, depth, 1, "sigmoid", rate, rng)
        return cls(enc, dec, disc, prior, config, class_labels, feature_names)

    @property
    def n_classes(self):
        return len(self.class_labels)

    def label_indices(self, labels):
        try:
            return np.array([self._label_index[str(l)] for l in labels], dtype=int)
        except KeyError as exc:
            raise ValidationError(f"unknown class label {exc.args[0]!r}")

    def one_hot(self, idx):
        return np.eye(self.n_classes)[idx]

    def _targets(self, n_codes, n_prior):
        s = float(self.config.synthetic_target)
        return np.concatenate([np.full(n_codes, 1.0 - s), np.full(n_prior, s)])[:, None]

    # -- phases ---------------------------------------------------------------

    def discriminator_step(self, codes, idx, rng, x=None, enc_cache=None):
        """Phase 2 on precomputed encoder ``codes`` with class indices ``idx``.

        Draws one prior sample per row (same class), and updates the
        discriminator; with ``phase2_updates_encoder`` the encoder also
        follows the discriminator's objective, which needs ``enc_cache``.
        """
        onehot = self.one_hot(idx)
        z_prior = self.prior.sample_for_labels([self.class_labels[i] for i in idx], rng)
        inputs = np.vstack([np.hstack([codes, onehot]), np.hstack([z_prior, onehot])])
        targets = self._targets(len(codes), len(z_prior))
        p, cache = self.discriminator.forward(inputs, "train", rng)
        loss, g = binary_cross_entropy(p, targets)
        _check_loss(loss, "discriminator")
        g_disc = self.discriminator.backward(cache, g)
        if self._opt_disc is None:
            self._opt_disc = self.config._optimizer(self.config.disc_lr)
        if self.config.phase2_updates_encoder and enc_cache is not None:
            k = self.config.code_dim
            g_enc = self.encoder.backward(enc_cache, g_disc.inputs[: len(codes), :k])
            apply_update([self.discriminator, self.encoder], [g_disc, g_enc], self._opt_disc)
        else:
            apply_update(self.discriminator, g_disc, self._opt_disc)
        return loss

    def generator_step(self, x, idx, rng):
        """Phase 3: discriminator frozen, encoder pushed towards the prior-draw target."""
        k = self.config.code_dim
        codes, enc_cache = self.encoder.forward(x, "train", rng)
        p, cache = self.discriminator.forward(np.hstack([codes, self.one_hot(idx)]), "train", rng)
        target = np.full((len(codes), 1), float(self.config.synthetic_target))
        loss, g = binary_cross_entropy(p, target)
        _check_loss(loss, "generator")
        g_in = self.discriminator.backward(cache, g, param_grads=False).inputs[:, :k]
        g_enc = self.encoder.backward(enc_cache, g_in)
        if self._opt_gen is None:
            self._opt_gen = self.config._optimizer(self.config.gen_lr)
        apply_update(self.encoder, g_enc, self._opt_gen)
        return loss

    def train_epoch(self, data: Dataset, rng) -> EpochLog:
        """One pass over shuffled minibatches of ``data``; returns batch-weighted mean losses."""
        x = self._check_features(data.features)
        idx = self.label_indices(data.labels)
        shuffle_rng, recon_rng, adv_rng = _epoch_streams(rng)
        order = shuffle_rng.permutation(len(x))
        bs = self.config.batch_size
        totals = np.zeros(3)
        epoch = self.epochs_trained + 1
        try:
            for start in range(0, len(x), bs):
                b = order[start : start + bs]
                xb, yb = x[b], idx[b]
                r = self.reconstruction_step(xb, recon_rng)
                codes, enc_cache = self.encoder.forward(xb, "train", adv_rng)
                d = self.discriminator_step(codes, yb, adv_rng, xb, enc_cache)
                g = self.generator_step(xb, yb, adv_rng)
                totals += len(b) * np.array([r, d, g])
        except DivergedTrainingError as exc:
            exc.epoch = epoch
            raise
        self.epochs_trained = epoch
        r, d, g = totals / len(x)
        return EpochLog(epoch, "train", float(r), float(d), float(g))

    def fit(self, train: Dataset, rng, epochs=None, test: Dataset | None = None, callback=None):
        """Train for ``epochs`` (default ``config.epochs``); returns all EpochLogs.

        When ``test`` is given, eval-mode losses on it are logged after every
        epoch. Training aborts with :class:`DivergedTrainingError` when
        reconstruction MSE exceeds ``divergence_factor`` times its epoch-1
        value, and stops early if the plateau rule is enabled and met.
        """
        epochs = self.config.epochs if epochs is None else epochs
        logs, recon = [], []
        for _ in range(epochs):
            log = self.train_epoch(train, rng)
            logs.append(log)
            recon.append(log.recon_mse)
            if recon[0] > 0 and log.recon_mse > self.config.divergence_factor * recon[0]:
                raise DivergedTrainingError(
                    f"reconstruction MSE {log.recon_mse:.4g} exceeds "
                    f"{self.config.divergence_factor}x its epoch-1 value {recon[0]:.4g}",
                    phase="reconstruction",
                    epoch=log.epoch,
                )
            if test is not None:
                t = self.evaluate_losses(test, rng)
                t.epoch = log.epoch
                logs.append(t)
            if callback is not None:
                callback(log)
            if plateaued(recon, self.config.plateau_patience, self.config.plateau_tol):
                break
        return logs

    # -- inference ------------------------------------------------------------

    def evaluate_losses(self, data: Dataset, rng, split="test") -> EpochLog:
        """The three training losses in eval mode, with fresh prior draws, no updates."""
        x = self._check_features(data.features)
        idx = self.label_indices(data.labels)
        codes = self.encoder.predict(x)
        recon = mse_loss(self.decoder.predict(codes), x)[0]
        onehot = self.one_hot(idx)
        z_prior = self.prior.sample_for_labels([self.class_labels[i] for i in idx], rng)
        inputs = np.vstack([np.hstack([codes, onehot]), np.hstack([z_prior, onehot])])
        p = self.discriminator.predict(inputs)
        d = binary_cross_entropy(p, self._targets(len(codes), len(z_prior)))[0]
        g = binary_cross_entropy(
            p[: len(codes)], np.full((len(codes), 1), float(self.config.synthetic_target))
        )[0]
        return EpochLog(self.epochs_trained, split, recon, d, g)

    def generate_synthetic(self, per_class, rng) -> Dataset:
        """``per_class`` decoded prior draws for every class, labelled by component."""
        if int(per_class) < 1:
            raise ValidationError(f"per_class must be >= 1, got {per_class}")
        codes, labels = [], []
        for label in self.class_labels:
            codes.append(self.prior.sample(label, int(per_class), rng))
            labels.extend([label] * int(per_class))
        feats = self.decode(np.vstack(codes))
        n = len(labels)
        return Dataset(
            feats, labels, [SYNTHETIC_SESSION] * n, [SYNTHETIC_SESSION] * n, self.feature_names
        )

    def code_purity(self, data: Dataset):
        """Fraction of rows whose code is nearest to their own class's prior mean."""
        idx = self.label_indices(data.labels)
        return float(np.mean(self.prior.nearest_component(self.encode(data.features)) == idx))

    # -- persistence ----------------------------------------------------------

    def save(self, path):
        header = {
            "D": self.config.input_dim,
            "K": self.config.code_dim,
            "C": self.n_classes,
            "class_labels": self.class_labels,
            "feature_names": self.feature_names,
            "prior": self.prior.to_dict(),
            "config": asdict(self.config),
            "epochs_trained": self.epochs_trained,
            "networks": {},
        }
        arrays = {}
        for name in ("encoder", "decoder", "discriminator"):
            layers, arr = container.network_to_parts(getattr(self, name), name)
            header["networks"][name] = layers
            arrays.update(arr)
        if self.standardizer is not None:
            header["standardizer_constant"] = self.standardizer.constant_features
            arrays["standardizer.mean"] = self.standardizer.mean
            arrays["standardizer.stddev"] = self.standardizer.stddev
        if self.train_sessions is not None:
            header["train_sessions"] = sorted(self.train_sessions)
        container.write_container(path, "aae", header, arrays)

    @classmethod
    def load(cls, path):
        header, arrays = container.read_container(path, expect_kind="aae")
        nets = {
            name: container.network_from_parts(header["networks"][name], arrays, name)
            for name in ("encoder", "decoder", "discriminator")
        }
        std = None
        if "standardizer.mean" in arrays:
            const = np.zeros(header["D"], dtype=bool)
            const[header.get("standardizer_constant", [])] = True
            std = Standardizer(arrays["standardizer.mean"], arrays["standardizer.stddev"], const)
        model = cls(
            nets["encoder"],
            nets["decoder"],
            nets["discriminator"],
            MixturePrior.from_dict(header["prior"]),
            AaeConfig(**header["config"]),
            header["class_labels"],
            header["feature_names"],
            std,
        )
        model.epochs_trained = header.get("epochs_trained", 0)
        model.train_sessions = header.get("train_sessions")
        return model


def split_rng(rng, n=2):
    """``n`` independent generators derived from ``rng`` (consumes one draw)."""
    seeds = rng.integers(0, 2**63 - 1, size=n)
    return [np.random.default_rng(int(s)) for s in seeds]


def fit_aae(train: Dataset, config: AaeConfig, prior: MixturePrior, rng, test=None,
            class_labels=None):
    """Build an adversarial auto-encoder and train it; returns ``(model, logs)``.

    Initialisation and training draw from separate child generators of
    ``rng``, matching :func:`aae_emotion.baselines.vanilla_ae_fit`.
    """
    class_labels = list(prior.labels) if class_labels is None else class_labels
    init_rng, train_rng = split_rng(rng)
    model = AdversarialAutoencoder.build(
        config, class_labels, prior, init_rng, feature_names=train.feature_names
    )
    logs = model.fit(train, train_rng, test=test)
    return model, logs


def plateaued(history, patience, tol):
    """True when the relative change over the last ``patience`` epochs is below ``tol``."""
    if not patience or len(history) <= patience:
        return False
    old = history[-1 - patience]
    if old == 0:
        return True
    return abs(history[-1] - old) / abs(old) < tol
