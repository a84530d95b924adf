"""Small feed-forward network engine on top of numpy.

Dense layers with a fixed activation vocabulary, inverted dropout, MSE and
binary cross-entropy losses, hand-written backpropagation, and SGD / Adam
optimizers. Weight matrices are stored as ``(fan_in, fan_out)`` so a layer
computes ``x @ W + b`` on row-major batches.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ShapeError, UsageError, ValidationError

ACTIVATIONS = ("identity", "relu", "tanh", "sigmoid")

BCE_EPS = 1e-7


def _activate(kind, z):
    if kind == "identity":
        return z
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "sigmoid":
        # split on sign to avoid overflow in exp
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    raise ValidationError(f"unknown activation {kind!r}")


def _activation_grad(kind, z, a, upstream):
    if kind == "identity":
        return upstream
    if kind == "relu":
        return upstream * (z > 0)
    if kind == "tanh":
        return upstream * (1.0 - a * a)
    if kind == "sigmoid":
        return upstream * a * (1.0 - a)
    raise ValidationError(f"unknown activation {kind!r}")


@dataclass
class DenseLayer:
    """Affine map followed by an activation and optional inverted dropout."""

    weights: np.ndarray
    bias: np.ndarray
    activation: str = "identity"
    dropout: float = 0.0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if self.weights.ndim != 2:
            raise ShapeError("weights must be a 2-D (fan_in, fan_out) matrix")
        if self.bias.shape != (self.weights.shape[1],):
            raise ShapeError(
                f"bias length {self.bias.shape[0]} != fan_out {self.weights.shape[1]}"
            )
        if self.activation not in ACTIVATIONS:
            raise ValidationError(
                f"activation must be one of {ACTIVATIONS}, got {self.activation!r}"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ValidationError(f"dropout rate must lie in [0, 1), got {self.dropout}")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValidationError("layer parameters must be finite")

    @property
    def fan_in(self):
        return self.weights.shape[0]

    @property
    def fan_out(self):
        return self.weights.shape[1]


@dataclass
class ForwardCache:
    """Everything ``Network.backward`` needs from one forward pass."""

    owner: int
    version: int
    inputs: list = field(default_factory=list)
    pre: list = field(default_factory=list)
    act: list = field(default_factory=list)
    post: list = field(default_factory=list)
    masks: list = field(default_factory=list)


@dataclass
class Gradients:
    weights: list
    biases: list
    inputs: np.ndarray

    def as_list(self):
        out = []
        for gw, gb in zip(self.weights, self.biases):
            out.extend((gw, gb))
        return out

    def scaled(self, factor):
        return Gradients(
            [g * factor for g in self.weights],
            [g * factor for g in self.biases],
            self.inputs * factor,
        )


class Network:
    """An ordered stack of :class:`DenseLayer` objects.

    Parameters are mutated in place by optimizers; every update bumps an
    internal version counter so a cache from an older forward pass cannot be
    fed to :meth:`backward` by mistake.
    """

    def __init__(self, layers: Sequence[DenseLayer]):
        layers = list(layers)
        if not layers:
            raise ValidationError("a network needs at least one layer")
        for i in range(1, len(layers)):
            if layers[i - 1].fan_out != layers[i].fan_in:
                raise ShapeError(
                    f"layer {i} fan_in {layers[i].fan_in} does not match "
                    f"layer {i - 1} fan_out {layers[i - 1].fan_out}"
                )
        self.layers = layers
        self._version = 0

    @classmethod
    def build(cls, dims, activations, dropouts=None, rng=None):
        """Glorot-uniform initialised network with layer sizes ``dims``.

        ``activations`` and ``dropouts`` give one entry per layer, i.e.
        ``len(dims) - 1`` entries each.
        """
        n = len(dims) - 1
        if n < 1:
            raise ValidationError("dims needs at least an input and an output size")
        if isinstance(activations, str):
            activations = [activations] * n
        dropouts = [0.0] * n if dropouts is None else list(dropouts)
        if len(activations) != n or len(dropouts) != n:
            raise ValidationError("need one activation and one dropout per layer")
        rng = np.random.default_rng() if rng is None else rng
        layers = []
        for fan_in, fan_out, act, rate in zip(dims[:-1], dims[1:], activations, dropouts):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            layers.append(DenseLayer(w, np.zeros(fan_out), act, rate))
        return cls(layers)

    @property
    def input_dim(self):
        return self.layers[0].fan_in

    @property
    def output_dim(self):
        return self.layers[-1].fan_out

    @property
    def dims(self):
        return [self.layers[0].fan_in] + [layer.fan_out for layer in self.layers]

    @property
    def version(self):
        return self._version

    def parameters(self):
        out = []
        for layer in self.layers:
            out.extend((layer.weights, layer.bias))
        return out

    def n_parameters(self):
        return sum(p.size for p in self.parameters())

    def mark_updated(self):
        self._version += 1

    def copy(self):
        return Network(
            [
                DenseLayer(l.weights.copy(), l.bias.copy(), l.activation, l.dropout)
                for l in self.layers
            ]
        )

    def forward(self, inputs, mode="eval", rng=None):
        """Run the batch ``inputs`` (rows are samples) through the network.

        Returns ``(outputs, cache)``. In ``"train"`` mode dropout masks are
        drawn from ``rng``; in ``"eval"`` mode dropout is the identity.
        """
        if mode not in ("train", "eval"):
            raise ValidationError(f"mode must be 'train' or 'eval', got {mode!r}")
        x = np.asarray(inputs, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        cache = ForwardCache(owner=id(self), version=self._version)
        for i, layer in enumerate(self.layers):
            if x.ndim != 2 or x.shape[1] != layer.fan_in:
                raise ShapeError(
                    f"layer {i} expects {layer.fan_in} input columns, got shape {x.shape}"
                )
            z = x @ layer.weights + layer.bias
            a = _activate(layer.activation, z)
            pre_drop = a
            mask = None
            if mode == "train" and layer.dropout > 0.0:
                if rng is None:
                    raise UsageError("train-mode forward with dropout needs an rng")
                keep = 1.0 - layer.dropout
                mask = (rng.random(a.shape) < keep) / keep
                a = a * mask
            cache.inputs.append(x)
            cache.pre.append(z)
            cache.act.append(pre_drop)
            cache.post.append(a)
            cache.masks.append(mask)
            x = a
        return x, cache

    def predict(self, inputs):
        return self.forward(inputs, mode="eval")[0]

    def backward(self, cache: ForwardCache, output_gradient, param_grads=True) -> Gradients:
        """Backpropagate ``output_gradient`` (dLoss/dOutputs) through the pass in ``cache``.

        With ``param_grads=False`` only the input gradient is computed (weight
        and bias entries are None), which is what a frozen network needs.
        """
        if cache.owner != id(self) or len(cache.pre) != len(self.layers):
            raise UsageError("forward cache was produced by a different network")
        if cache.version != self._version:
            raise UsageError("forward cache is stale: parameters changed since forward")
        g = np.asarray(output_gradient, dtype=np.float64)
        if g.shape != cache.post[-1].shape:
            raise ShapeError(
                f"output gradient shape {g.shape} != output shape {cache.post[-1].shape}"
            )
        gw = [None] * len(self.layers)
        gb = [None] * len(self.layers)
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            if cache.masks[i] is not None:
                g = g * cache.masks[i]
            dz = _activation_grad(layer.activation, cache.pre[i], cache.act[i], g)
            if param_grads:
                gw[i] = cache.inputs[i].T @ dz
                gb[i] = dz.sum(axis=0)
            g = dz @ layer.weights.T
        return Gradients(gw, gb, g)


def mse_loss(prediction, target):
    """Mean over all entries of the squared difference, and its gradient."""
    p = np.asarray(prediction, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeError(f"prediction shape {p.shape} != target shape {t.shape}")
    diff = p - t
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def binary_cross_entropy(prediction, labels, eps=BCE_EPS):
    """Mean binary cross-entropy of probabilities against 0/1 labels.

    Probabilities are clamped to ``[eps, 1 - eps]``. The gradient is taken
    with respect to ``prediction`` and has its shape.
    """
    p = np.asarray(prediction, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64).reshape(p.shape)
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValidationError("binary cross-entropy labels must be 0 or 1")
    p = np.clip(p, eps, 1.0 - eps)
    loss = -np.mean(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    grad = (p - y) / (p * (1.0 - p)) / p.size
    return float(loss), grad


LOSSES = {"mse": mse_loss, "bce": binary_cross_entropy}


class Optimizer:
    """Base class; accumulators are created lazily on the first step."""

    kind = "base"

    def __init__(self, learning_rate):
        if not learning_rate >= 0.0:
            raise ValidationError(f"learning rate must be >= 0, got {learning_rate}")
        self.learning_rate = float(learning_rate)
        self.steps = 0
        self._shapes = None

    def _check(self, params, grads):
        if len(params) != len(grads):
            raise ShapeError(f"{len(grads)} gradients for {len(params)} parameters")
        shapes = [p.shape for p in params]
        for p, g in zip(params, grads):
            if p.shape != g.shape:
                raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if self._shapes is None:
            self._shapes = shapes
            self._init_state(params)
        elif shapes != self._shapes:
            raise ShapeError("parameter set changed shape between optimizer steps")

    def _init_state(self, params):
        pass

    def step(self, params, grads):
        raise NotImplementedError


class SGD(Optimizer):
    kind = "sgd_momentum"

    def __init__(self, learning_rate=0.01, momentum=0.0):
        super().__init__(learning_rate)
        self.momentum = float(momentum)
        self.velocity = None

    def _init_state(self, params):
        self.velocity = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        self._check(params, grads)
        self.steps += 1
        for p, g, v in zip(params, grads, self.velocity):
            v *= self.momentum
            v -= self.learning_rate * g
            p += v


class Adam(Optimizer):
    kind = "adam"

    def __init__(self, learning_rate=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        super().__init__(learning_rate)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.m = None
        self.v = None

    def _init_state(self, params):
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        self._check(params, grads)
        self.steps += 1
        c1 = 1.0 - self.beta1 ** self.steps
        c2 = 1.0 - self.beta2 ** self.steps
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.learning_rate * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(kind="adam", learning_rate=1e-4, **kwargs):
    if kind == "adam":
        return Adam(learning_rate, **kwargs)
    if kind in ("sgd", "sgd_momentum"):
        return SGD(learning_rate, **kwargs)
    raise ValidationError(f"unknown optimizer {kind!r}")


def apply_update(nets, grads, opt: Optimizer):
    """Step ``opt`` on one network or several, given matching gradients.

    ``nets`` may be a single :class:`Network` with a :class:`Gradients`, or
    parallel sequences of each.
    """
    if isinstance(nets, Network):
        nets, grads = [nets], [grads]
    params, flat = [], []
    for net, g in zip(nets, grads):
        params.extend(net.parameters())
        flat.extend(g.as_list())
    opt.step(params, flat)
    for net in nets:
        net.mark_updated()
    return nets, opt


def _resolve_loss(loss):
    if callable(loss):
        return loss
    try:
        return LOSSES[loss]
    except KeyError:
        raise ValidationError(f"unknown loss {loss!r}; use 'mse', 'bce' or a callable")


def gradient_check(net: Network, loss, inputs, targets, eps=1e-5, corrupt=False):
    """Largest relative error between backprop and central-difference gradients.

    ``loss`` is ``"mse"``, ``"bce"`` or a callable ``(pred, target) -> (value,
    grad)``. The network runs in eval mode. ``corrupt`` scales the analytic
    gradients by 1.01, as a negative control for the checker itself.
    """
    loss_fn = _resolve_loss(loss)
    if net.n_parameters() >= 10_000:
        raise ValidationError("gradient_check is meant for networks under 10^4 parameters")
    out, cache = net.forward(inputs, mode="eval")
    _, g_out = loss_fn(out, targets)
    analytic = net.backward(cache, g_out).as_list()
    if corrupt:
        analytic = [a * 1.01 + 1e-3 for a in analytic]
    worst = 0.0
    for p, a in zip(net.parameters(), analytic):
        flat = p.reshape(-1)
        a_flat = a.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + eps
            up = loss_fn(net.predict(inputs), targets)[0]
            flat[k] = orig - eps
            down = loss_fn(net.predict(inputs), targets)[0]
            flat[k] = orig
            numeric = (up - down) / (2.0 * eps)
            denom = max(abs(a_flat[k]), abs(numeric), 1e-8)
            worst = max(worst, abs(a_flat[k] - numeric) / denom)
    return worst

