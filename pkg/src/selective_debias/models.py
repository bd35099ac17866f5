"""Softmax classifier heads (logistic regression and ReLU MLPs) in numpy.

A head is a stack of affine layers; ReLU sits between layers and never
after the last one. Training is plain mini-batch gradient descent on mean
cross-entropy plus an L2 penalty on the weights, seeded end to end.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .tensor_core import DimensionError

DEFAULT_MLP_HIDDEN = (64, 32)


class DivergenceError(FloatingPointError):
    def __init__(self, epoch, loss):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch


class UnsupportedModeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LinearLayer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=np.float64)
        b = np.asarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise DimensionError(f"inconsistent layer shapes {w.shape} / {b.shape}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("layer parameters must be finite")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def in_dim(self):
        return self.weight.shape[1]

    @property
    def out_dim(self):
        return self.weight.shape[0]

    def __call__(self, x):
        return x @ self.weight.T + self.bias


@dataclass(frozen=True, eq=False)
class ClassifierHead:
    layers: tuple
    class_count: int
    loss_history: tuple = field(default=())

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise DimensionError("a head needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.out_dim != b.in_dim:
                raise DimensionError(f"layer output {a.out_dim} does not feed input {b.in_dim}")
        if layers[-1].out_dim != self.class_count:
            raise DimensionError(
                f"final layer has {layers[-1].out_dim} outputs, expected {self.class_count}"
            )
        object.__setattr__(self, "layers", layers)

    @property
    def activation(self):
        return "relu" if len(self.layers) > 1 else "none"

    @property
    def input_dim(self):
        return self.layers[0].in_dim

    @property
    def is_mlp(self):
        return len(self.layers) > 1

    @property
    def sizes(self):
        return (self.input_dim,) + tuple(layer.out_dim for layer in self.layers)

    def to_dict(self):
        return {
            "activation": self.activation,
            "class_count": self.class_count,
            "layers": [
                {
                    "in": layer.in_dim,
                    "out": layer.out_dim,
                    "weight": layer.weight.ravel().tolist(),
                    "bias": layer.bias.tolist(),
                }
                for layer in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, doc):
        layers = [
            LinearLayer(
                np.array(d["weight"], dtype=np.float64).reshape(d["out"], d["in"]),
                np.array(d["bias"], dtype=np.float64),
            )
            for d in doc["layers"]
        ]
        head = cls(tuple(layers), int(doc["class_count"]))
        if doc.get("activation", head.activation) != head.activation:
            raise ValueError(f"activation tag {doc['activation']!r} does not match layer count")
        return head

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 200
    batch_size: int = 64
    l2: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.l2 < 0:
            raise ValueError("l2 must be non-negative")


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _as_batch(head, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = x[None, :] if single else x
    if x2.ndim != 2 or x2.shape[1] != head.input_dim:
        raise DimensionError(f"expected inputs of dim {head.input_dim}, got shape {x.shape}")
    return x2, single


def forward_from(head, h, start):
    """Run layers ``start..`` on ``h`` (the input to layer ``start``); returns logits."""
    for k in range(start, len(head.layers)):
        h = head.layers[k](h)
        if k < len(head.layers) - 1:
            h = np.maximum(h, 0.0)
    return h


def _forward(head, x):
    """Inputs to every layer plus the final logits."""
    inputs = []
    h = x
    for k, layer in enumerate(head.layers):
        inputs.append(h)
        h = layer(h)
        if k < len(head.layers) - 1:
            h = np.maximum(h, 0.0)
    return inputs, h


def logits(head, x):
    x2, single = _as_batch(head, x)
    out = forward_from(head, x2, 0)
    return out[0] if single else out


def predict_proba(head, x):
    """Class probabilities for one vector or a batch of row vectors."""
    x2, single = _as_batch(head, x)
    p = softmax(forward_from(head, x2, 0))
    return p[0] if single else p


def predict(head, x):
    return np.argmax(predict_proba(head, x), axis=-1)


def hidden_activations(head, x):
    """Input to each linear layer, first entry being ``x`` itself.

    For logistic regression this is just ``[x]``; the last entry is the
    "last hidden layer" representation used by LEACE-last.
    """
    x2, single = _as_batch(head, x)
    inputs, _ = _forward(head, x2)
    return [a[0] for a in inputs] if single else inputs


def init_head(sizes, seed=0):
    """Uniform(+-1/sqrt(fan_in)) initialisation for a head with the given layer sizes."""
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) < 2:
        raise DimensionError("sizes must list input dim and at least one output dim")
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        b = rng.uniform(-bound, bound, size=fan_out)
        layers.append(LinearLayer(w, b))
    return ClassifierHead(tuple(layers), sizes[-1])


def logreg_sizes(input_dim, class_count):
    return (input_dim, class_count)


def mlp_sizes(input_dim, class_count, hidden=DEFAULT_MLP_HIDDEN):
    return (input_dim, *hidden, class_count)


def loss_and_grads(head, x, y, l2=0.0):
    """Mean cross-entropy (+ 0.5*l2*||W||^2) and its gradients.

    Returns ``(loss, [(dW, db), ...])`` in layer order.
    """
    n = x.shape[0]
    inputs, out = _forward(head, x)
    z = out - out.max(axis=1, keepdims=True)
    log_p = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -log_p[np.arange(n), y].mean()
    loss += 0.5 * l2 * sum(float(np.sum(layer.weight**2)) for layer in head.layers)

    delta = np.exp(log_p)
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads = [None] * len(head.layers)
    for k in range(len(head.layers) - 1, -1, -1):
        layer = head.layers[k]
        grads[k] = (delta.T @ inputs[k] + l2 * layer.weight, delta.sum(axis=0))
        if k > 0:
            delta = (delta @ layer.weight) * (inputs[k] > 0)
    return loss, grads


def _step(head, grads, lr, epoch):
    new = [(layer.weight - lr * gw, layer.bias - lr * gb) for layer, (gw, gb) in zip(head.layers, grads)]
    if not all(np.all(np.isfinite(w)) and np.all(np.isfinite(b)) for w, b in new):
        raise DivergenceError(epoch, float("nan"))
    return ClassifierHead(tuple(LinearLayer(w, b) for w, b in new), head.class_count)


def train_head(data, sizes, cfg=TrainConfig()):
    """Train a softmax head on ``data`` with mini-batch gradient descent.

    ``sizes`` lists layer widths from input to output, e.g. ``(10, 2)`` for
    logistic regression or ``(10, 64, 32, 2)`` for the default MLP.
    The returned head carries the full-data loss after every epoch in
    ``loss_history``.
    """
    sizes = tuple(sizes)
    if sizes[0] != data.dim:
        raise DimensionError(f"architecture input {sizes[0]} != feature dim {data.dim}")
    if sizes[-1] != data.class_count:
        raise DimensionError(f"architecture output {sizes[-1]} != class count {data.class_count}")
    head = init_head(sizes, cfg.seed)
    x, y = data.features, data.labels
    n = x.shape[0]
    rng = np.random.default_rng(cfg.seed + 1)
    history = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            _, grads = loss_and_grads(head, x[idx], y[idx], cfg.l2)
            head = _step(head, grads, cfg.learning_rate, epoch)
        loss, _ = loss_and_grads(head, x, y, cfg.l2)
        if not np.isfinite(loss):
            raise DivergenceError(epoch, loss)
        history.append(float(loss))
    return ClassifierHead(head.layers, head.class_count, tuple(history))


def _flatten(head):
    return np.concatenate([np.concatenate([l.weight.ravel(), l.bias]) for l in head.layers])


def _unflatten(head, theta):
    layers, pos = [], 0
    for layer in head.layers:
        nw = layer.weight.size
        w = theta[pos : pos + nw].reshape(layer.weight.shape).copy()
        pos += nw
        b = theta[pos : pos + layer.out_dim].copy()
        pos += layer.out_dim
        layers.append(LinearLayer(w, b))
    return ClassifierHead(tuple(layers), head.class_count)


def _relu_pattern(head, x):
    inputs, _ = _forward(head, x)
    return [a > 0 for a in inputs[1:]]


def gradient_check(head, x, y, l2=0.0, step=1e-5):
    """Max elementwise relative error between backprop and central differences.

    Entries much smaller than the largest gradient entry are measured against
    ``1e-3 * max|grad|`` instead of their own magnitude, since the central
    difference carries ~1e-11 absolute roundoff. Coordinates whose +-step
    perturbation flips a ReLU on or off are skipped: the loss has a kink
    inside the stencil there and the difference quotient is meaningless.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    _, grads = loss_and_grads(head, x, y, l2)
    analytic = np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in grads])
    theta = _flatten(head)
    base_pattern = _relu_pattern(head, x)
    numeric = np.empty_like(theta)
    smooth = np.ones(theta.size, dtype=bool)
    for i in range(theta.size):
        t = theta.copy()
        t[i] += step
        hp = _unflatten(head, t)
        t[i] -= 2 * step
        hm = _unflatten(head, t)
        if head.is_mlp:
            for h in (hp, hm):
                if any(not np.array_equal(a, b) for a, b in zip(_relu_pattern(h, x), base_pattern)):
                    smooth[i] = False
        numeric[i] = (loss_and_grads(hp, x, y, l2)[0] - loss_and_grads(hm, x, y, l2)[0]) / (2 * step)
    floor = max(1e-3 * float(np.max(np.abs(analytic))), 1e-12)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    rel = np.abs(analytic - numeric) / denom
    return float(np.max(rel[smooth])) if smooth.any() else 0.0
