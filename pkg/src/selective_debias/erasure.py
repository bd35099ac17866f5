"""Linear concept erasure: LEACE and INLP, and the debiased forward pass.

Three application modes are supported for a trained head:

``leace_last``
    one LEACE eraser on the input to the final linear layer (the raw
    features for logistic regression);
``leace_cls``
    one LEACE eraser before every linear layer, fitted layer by layer on
    activations that already went through the upstream erasers;
``inlp``
    an INLP nullspace projection on the input to the final layer.
"""

import json
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import models
from .data import LabeledEmbeddings
from .models import TrainConfig, UnsupportedModeError
from .tensor_core import (
    PINV_RCOND,
    DimensionError,
    as_matrix,
    covariance,
    cross_covariance,
    pinv,
    psd_sqrt,
)

MODES = ("leace_last", "leace_cls", "inlp")

# Singular values of the whitened cross-covariance below this are dropped.
# Whitened X has unit variance and one-hot Z at most 1/4, so the cutoff is
# scale-free.
PROJECTOR_CUTOFF = 1e-10

INLP_STOP_MARGIN = 0.01


class DegenerateConceptError(ValueError):
    pass


class NumericError(FloatingPointError):
    pass


def normalize_mode(mode):
    m = str(mode).replace("-", "_").lower()
    if m not in MODES:
        raise ValueError(f"unknown eraser mode {mode!r}; expected one of {MODES}")
    return m


def one_hot(z, group_count=None, centered=True):
    z = np.asarray(z, dtype=np.int64)
    g = int(z.max()) + 1 if group_count is None else int(group_count)
    enc = np.zeros((z.shape[0], g))
    enc[np.arange(z.shape[0]), z] = 1.0
    if centered:
        enc -= enc.mean(axis=0)
    return enc


def _as_rows(x, dim):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = x[None, :] if single else x
    if x2.ndim != 2 or x2.shape[1] != dim:
        raise DimensionError(f"expected vectors of dim {dim}, got shape {x.shape}")
    return x2, single


@dataclass(frozen=True, eq=False)
class LeaceEraser:
    mean: np.ndarray
    whitener: np.ndarray
    projector: np.ndarray
    unwhitener: np.ndarray

    @property
    def dim(self):
        return self.mean.shape[0]

    @cached_property
    def _transform(self):
        # x -> x - A (x - mean), with A = W+ P W
        return self.unwhitener @ self.projector @ self.whitener

    def to_dict(self):
        d = self.dim
        return {
            "kind": "leace",
            "dim": d,
            "mean": self.mean.tolist(),
            "whitener": self.whitener.ravel().tolist(),
            "projector": self.projector.ravel().tolist(),
            "unwhitener": self.unwhitener.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, doc):
        d = int(doc["dim"])
        mats = [np.array(doc[k], dtype=np.float64).reshape(d, d) for k in ("whitener", "projector", "unwhitener")]
        return cls(np.array(doc["mean"], dtype=np.float64), *mats)


def fit_leace(x, z, group_count=None):
    """Closed-form least-squares concept eraser for features ``x`` and groups ``z``.

    Whitener ``W = pinv(Sigma_XX^{1/2})``; projector onto the column space
    of ``W Sigma_XZ`` with ``Z`` the centered one-hot group encoding.
    """
    x = as_matrix(x, "x")
    z = np.asarray(z, dtype=np.int64)
    n, d = x.shape
    if np.unique(z).size < 2:
        raise DegenerateConceptError("concept has a single group; nothing to erase")
    if n < d:
        warnings.warn(f"fitting LEACE on {n} rows for {d} dims", stacklevel=2)
    sigma_xx = covariance(x)
    sigma_xz = cross_covariance(x, one_hot(z, group_count))
    if not (np.all(np.isfinite(sigma_xx)) and np.all(np.isfinite(sigma_xz))):
        raise NumericError("non-finite covariance")
    root = psd_sqrt(sigma_xx)
    # rank is decided on Sigma_XX's spectrum: eigenvalues below
    # PINV_RCOND * lambda_max are rounding noise, i.e. sqrt(PINV_RCOND) on the root
    whitener = pinv(root, rcond=np.sqrt(PINV_RCOND))
    unwhitener = pinv(whitener, rcond=np.sqrt(PINV_RCOND))
    u, s, _ = np.linalg.svd(whitener @ sigma_xz, full_matrices=False)
    basis = u[:, s > PROJECTOR_CUTOFF]
    projector = basis @ basis.T
    return LeaceEraser(x.mean(axis=0), whitener, projector, unwhitener)


def erase(eraser, x):
    x2, single = _as_rows(x, eraser.dim)
    out = x2 - (x2 - eraser.mean) @ eraser._transform.T
    return out[0] if single else out


@dataclass(frozen=True, eq=False)
class InlpEraser:
    projection: np.ndarray
    iterations: int
    probe_accuracies: tuple

    @property
    def dim(self):
        return self.projection.shape[0]

    @property
    def rank(self):
        return int(round(np.trace(self.projection)))

    def to_dict(self):
        return {
            "kind": "inlp",
            "dim": self.dim,
            "iterations": self.iterations,
            "probe_accuracies": list(self.probe_accuracies),
            "projection": self.projection.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, doc):
        d = int(doc["dim"])
        p = np.array(doc["projection"], dtype=np.float64).reshape(d, d)
        return cls(p, int(doc["iterations"]), tuple(doc["probe_accuracies"]))


def _probe_config(iteration, n):
    return TrainConfig(learning_rate=0.1, epochs=200, batch_size=n, l2=0.0, seed=iteration)


def train_probe(x, z, group_count, seed=0):
    """Logistic-regression probe predicting groups from features (full batch)."""
    x = as_matrix(x, "x")
    data = LabeledEmbeddings(x, z, z, group_count, group_count)
    return models.train_head(data, (x.shape[1], group_count), _probe_config(seed, x.shape[0]))


def fit_inlp(x, z, max_iterations=10, group_count=None, stop_margin=INLP_STOP_MARGIN):
    """Iterative nullspace projection.

    Each round trains a linear probe for ``z`` on the currently projected
    features. If its accuracy is within ``stop_margin`` of the majority
    share the loop stops; otherwise the probe's (centered) weight rows are
    added to the removed subspace. Returns the accumulated orthogonal
    projection onto the complement of everything removed.
    """
    if max_iterations < 1:
        raise ValueError("max_iterations must be at least 1")
    x = as_matrix(x, "x")
    z = np.asarray(z, dtype=np.int64)
    g = int(z.max()) + 1 if group_count is None else int(group_count)
    if np.unique(z).size < 2:
        raise DegenerateConceptError("concept has a single group; nothing to erase")
    d = x.shape[1]
    majority = np.bincount(z, minlength=g).max() / z.size
    projection = np.eye(d)
    removed = np.zeros((d, 0))
    accuracies = []
    iterations = 0
    for it in range(max_iterations):
        xp = x @ projection
        try:
            probe = train_probe(xp, z, g, seed=it)
        except models.DivergenceError as err:
            raise NumericError(f"INLP probe diverged at iteration {it + 1}: {err}") from err
        acc = float(np.mean(models.predict(probe, xp) == z))
        accuracies.append(acc)
        if acc <= majority + stop_margin:
            break
        w = probe.layers[0].weight
        # softmax is invariant to a shared offset, so only centered rows matter
        w = (w - w.mean(axis=0)) @ projection
        removed = np.hstack([removed, w.T])
        u, s, _ = np.linalg.svd(removed, full_matrices=False)
        basis = u[:, s > 1e-10 * max(s[0], 1e-300)]
        projection = np.eye(d) - basis @ basis.T
        projection = 0.5 * (projection + projection.T)
        iterations += 1
    return InlpEraser(projection, iterations, tuple(accuracies))


def apply_inlp(eraser, x):
    x2, single = _as_rows(x, eraser.dim)
    out = x2 @ eraser.projection.T
    return out[0] if single else out


def fit_leace_cls(head, x, z, group_count=None):
    """One LEACE eraser per linear layer, fitted sequentially down the head."""
    if not head.is_mlp:
        raise UnsupportedModeError("leace_cls needs an MLP head with at least two layers")
    h = as_matrix(x, "x")
    erasers = []
    for k, layer in enumerate(head.layers):
        e = fit_leace(h, z, group_count)
        erasers.append(e)
        h = layer(erase(e, h))
        if k < len(head.layers) - 1:
            h = np.maximum(h, 0.0)
    return erasers


@dataclass(frozen=True, eq=False)
class Debiaser:
    """An eraser bundle plus the mode saying where it plugs into the head."""

    mode: str
    erasers: tuple

    def __post_init__(self):
        mode = normalize_mode(self.mode)
        erasers = tuple(self.erasers) if isinstance(self.erasers, (list, tuple)) else (self.erasers,)
        kinds = {type(e) for e in erasers}
        if mode == "inlp":
            ok = len(erasers) == 1 and kinds == {InlpEraser}
        elif mode == "leace_last":
            ok = len(erasers) == 1 and kinds == {LeaceEraser}
        else:
            ok = len(erasers) >= 2 and kinds == {LeaceEraser}
        if not ok:
            raise ValueError(f"erasers {[type(e).__name__ for e in erasers]} do not fit mode {mode!r}")
        object.__setattr__(self, "mode", mode)
        object.__setattr__(self, "erasers", erasers)

    def check_head(self, head):
        dims = [e.dim for e in self.erasers]
        if self.mode == "leace_cls":
            want = [layer.in_dim for layer in head.layers]
        else:
            want = [head.layers[-1].in_dim]
        if dims != want:
            raise DimensionError(f"eraser dims {dims} do not match head layer inputs {want}")

    def to_dict(self):
        return {"mode": self.mode, "erasers": [e.to_dict() for e in self.erasers]}

    @classmethod
    def from_dict(cls, doc):
        erasers = [
            InlpEraser.from_dict(e) if e["kind"] == "inlp" else LeaceEraser.from_dict(e)
            for e in doc["erasers"]
        ]
        return cls(doc["mode"], tuple(erasers))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def fit_debiaser(head, x, z, mode="leace_last", group_count=None, inlp_iterations=10):
    """Fit the erasers for ``mode`` on features ``x`` (head inputs) and groups ``z``."""
    mode = normalize_mode(mode)
    if mode == "leace_cls":
        return Debiaser(mode, tuple(fit_leace_cls(head, x, z, group_count)))
    last = models.hidden_activations(head, x)[-1]
    if mode == "leace_last":
        return Debiaser(mode, (fit_leace(last, z, group_count),))
    return Debiaser(mode, (fit_inlp(last, z, inlp_iterations, group_count),))


def base_forward(head, x):
    """Standard head output: ``(probs, representation entering the last layer)``."""
    x2, single = _as_rows(x, head.input_dim)
    last = models.hidden_activations(head, x2)[-1]
    probs = models.softmax(models.forward_from(head, last, len(head.layers) - 1))
    return (probs[0], last[0]) if single else (probs, last)


def debiased_forward(head, debiaser, x):
    """Debiased head output: ``(probs, erased representation entering the last layer)``."""
    debiaser.check_head(head)
    x2, single = _as_rows(x, head.input_dim)
    n_layers = len(head.layers)
    if debiaser.mode == "leace_cls":
        h = x2
        for k, (layer, e) in enumerate(zip(head.layers, debiaser.erasers)):
            h = erase(e, h)
            if k == n_layers - 1:
                break
            h = np.maximum(layer(h), 0.0)
        last = h
    else:
        last = models.hidden_activations(head, x2)[-1]
        e = debiaser.erasers[0]
        last = erase(e, last) if debiaser.mode == "leace_last" else apply_inlp(e, last)
    probs = models.softmax(models.forward_from(head, last, n_layers - 1))
    return (probs[0], last[0]) if single else (probs, last)


def debiased_predict(head, debiaser, x):
    """Class probabilities after erasure, for one vector or a batch."""
    return debiased_forward(head, debiaser, x)[0]
