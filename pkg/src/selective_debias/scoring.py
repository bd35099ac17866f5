"""Per-instance bias scores comparing base and debiased head outputs.

Every score is "higher means more worth debiasing":

- ``kl``: KL(base || debiased) over class probabilities
- ``sr``: softmax response, ``1 - max_c p_c`` of the base prediction
- ``euclid`` / ``cosine``: distance between base and debiased
  representations entering the last layer
- ``random``: seeded uniform noise, the selection baseline
"""

from dataclasses import dataclass

import numpy as np

from .tensor_core import DimensionError

PROB_FLOOR = 1e-12
SIMPLEX_ATOL = 1e-6
KINDS = ("kl", "sr", "euclid", "cosine", "random")
_ALIASES = {"euclidean": "euclid", "softmax_response": "sr", "cos": "cosine"}


class DomainError(ValueError):
    pass


class DegenerateVectorError(ValueError):
    pass


@dataclass(frozen=True)
class ScoreKind:
    name: str
    seed: int | None = None

    def __post_init__(self):
        name = _ALIASES.get(self.name.lower(), self.name.lower())
        if name not in KINDS:
            raise ValueError(f"unknown score kind {self.name!r}; expected one of {KINDS}")
        if name == "random" and self.seed is None:
            raise ValueError("the random score needs a seed")
        object.__setattr__(self, "name", name)

    @classmethod
    def parse(cls, text, default_seed=0):
        """``"kl"``, ``"random"`` or ``"random:7"``."""
        name, _, seed = text.partition(":")
        name = name.strip()
        if _ALIASES.get(name.lower(), name.lower()) == "random":
            return cls("random", int(seed) if seed else int(default_seed))
        return cls(name)

    def __str__(self):
        return f"random:{self.seed}" if self.name == "random" else self.name


@dataclass(frozen=True, eq=False)
class PipelineOutputs:
    """Base and debiased head outputs for a batch of instances."""

    base_probs: np.ndarray
    debiased_probs: np.ndarray
    base_repr: np.ndarray
    debiased_repr: np.ndarray

    def __len__(self):
        return self.base_probs.shape[0]


def _check_simplex(p, name):
    p = np.asarray(p, dtype=np.float64)
    if not np.all(np.isfinite(p)) or np.any(p < -SIMPLEX_ATOL):
        raise DomainError(f"{name} has negative or non-finite entries")
    if np.any(np.abs(p.sum(axis=-1) - 1.0) > SIMPLEX_ATOL):
        raise DomainError(f"{name} does not sum to 1")
    return p


def kl_scores(p, p_hat):
    """Row-wise ``sum_c p_c ln(p_c / p_hat_c)`` with both clamped to >= 1e-12."""
    p = _check_simplex(p, "p")
    p_hat = _check_simplex(p_hat, "p_hat")
    if p.shape != p_hat.shape:
        raise DimensionError(f"shape mismatch {p.shape} vs {p_hat.shape}")
    pc = np.maximum(p, PROB_FLOOR)
    qc = np.maximum(p_hat, PROB_FLOOR)
    return np.sum(pc * (np.log(pc) - np.log(qc)), axis=-1)


def kl_score(p, p_hat):
    return float(kl_scores(np.atleast_2d(p), np.atleast_2d(p_hat))[0])


def sr_scores(p):
    p = _check_simplex(p, "p")
    return 1.0 - p.max(axis=-1)


def sr_score(p):
    return float(sr_scores(np.atleast_2d(p))[0])


def _pair(r, r_hat):
    r = np.asarray(r, dtype=np.float64)
    r_hat = np.asarray(r_hat, dtype=np.float64)
    if r.shape != r_hat.shape:
        raise DimensionError(f"shape mismatch {r.shape} vs {r_hat.shape}")
    return r, r_hat


def euclidean_scores(r, r_hat):
    r, r_hat = _pair(r, r_hat)
    return np.linalg.norm(r - r_hat, axis=-1)


def euclidean_score(r, r_hat):
    return float(euclidean_scores(np.atleast_2d(r), np.atleast_2d(r_hat))[0])


def cosine_scores(r, r_hat):
    """Row-wise ``1 - cos(r, r_hat)`` on uncentered vectors, in [0, 2]."""
    r, r_hat = _pair(r, r_hat)
    nr = np.linalg.norm(r, axis=-1)
    nh = np.linalg.norm(r_hat, axis=-1)
    if np.any(nr < 1e-12) or np.any(nh < 1e-12):
        raise DegenerateVectorError("cosine distance is undefined for near-zero vectors")
    cos = np.sum(r * r_hat, axis=-1) / (nr * nh)
    return np.clip(1.0 - cos, 0.0, 2.0)


def cosine_score(r, r_hat):
    return float(cosine_scores(np.atleast_2d(r), np.atleast_2d(r_hat))[0])


def random_scores(n, seed):
    return np.random.default_rng(seed).random(n)


def score_batch(kind, outputs):
    """Scores for every instance in ``outputs`` under ``kind``."""
    if isinstance(kind, str):
        kind = ScoreKind.parse(kind)
    if kind.name == "kl":
        return kl_scores(outputs.base_probs, outputs.debiased_probs)
    if kind.name == "sr":
        return sr_scores(outputs.base_probs)
    if kind.name == "euclid":
        return euclidean_scores(outputs.base_repr, outputs.debiased_repr)
    if kind.name == "cosine":
        return cosine_scores(outputs.base_repr, outputs.debiased_repr)
    return random_scores(len(outputs), kind.seed)
