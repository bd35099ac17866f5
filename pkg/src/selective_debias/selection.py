"""Selective debiasing: calibrate a score threshold, then swap in debiased predictions.

An instance keeps its base prediction while its bias score is below the
threshold ``h`` and takes the debiased prediction once the score reaches
``h``. The threshold is calibrated as a score percentile on a validation
prefix, choosing the selection percentage that optimises FF-score (or DTO).
"""

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .metrics import UndefinedFairnessError, evaluate
from .scoring import ScoreKind, score_batch

DEFAULT_GRID = tuple(range(1, 16))
OBJECTIVES = ("ff", "dto")


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class SelectionPolicy:
    score_kind: ScoreKind
    threshold: float
    calibrated_percentage: float
    objective: str = "ff"
    calibration_digest: str = ""

    def to_dict(self):
        return {
            "score_kind": str(self.score_kind),
            "threshold": _encode_float(self.threshold),
            "percentage": self.calibrated_percentage,
            "objective": self.objective,
            "calibration_digest": self.calibration_digest,
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            ScoreKind.parse(doc["score_kind"]),
            _decode_float(doc["threshold"]),
            float(doc["percentage"]),
            doc["objective"],
            doc.get("calibration_digest", ""),
        )


def _encode_float(v):
    return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")


def _decode_float(v):
    return float(v)


@dataclass(frozen=True, eq=False)
class SelectiveOutput:
    final_probs: np.ndarray
    selected_mask: np.ndarray

    @property
    def selected_fraction(self):
        return float(np.mean(self.selected_mask)) if self.selected_mask.size else 0.0

    @property
    def predictions(self):
        return np.argmax(self.final_probs, axis=1)


def threshold_for_percentage(scores, percentage):
    """Score value selecting the top ``percentage``% of ``scores``.

    ``k = ceil(p/100 * n)`` instances are selected when scores are distinct;
    ties at the threshold are all selected. 0% maps to ``+inf`` and 100% to
    ``-inf`` so the boundaries reproduce the base and fully debiased outputs
    on any data.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if percentage <= 0:
        return math.inf
    if percentage >= 100:
        return -math.inf
    k = math.ceil(percentage / 100.0 * scores.size)
    if k == 0:
        return math.inf
    # descending by score, ascending by index among equal scores
    order = np.lexsort((np.arange(scores.size), -scores))
    return float(scores[order[k - 1]])


def apply_selective(threshold, base_probs, debiased_probs, scores):
    """Debiased prediction where ``score >= threshold``, base prediction elsewhere."""
    if isinstance(threshold, SelectionPolicy):
        threshold = threshold.threshold
    base_probs = np.asarray(base_probs)
    debiased_probs = np.asarray(debiased_probs)
    scores = np.asarray(scores)
    if not (base_probs.shape == debiased_probs.shape and base_probs.shape[0] == scores.shape[0]):
        raise ValueError(
            f"length mismatch: {base_probs.shape}, {debiased_probs.shape}, {scores.shape}"
        )
    mask = scores >= threshold
    final = np.where(mask[:, None], debiased_probs, base_probs)
    return SelectiveOutput(final, mask)


def _objective_value(report, objective):
    return report.ff_score if objective == "ff" else -report.dto


def calibration_digest(outputs, labels, groups):
    h = hashlib.sha256()
    for arr in (outputs.base_probs, outputs.debiased_probs, labels, groups):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()[:16]


def calibrate(
    outputs,
    labels,
    groups,
    score_kind,
    grid=DEFAULT_GRID,
    objective="ff",
    class_count=None,
    group_count=None,
    scores=None,
):
    """Pick the grid percentage whose threshold maximises FF (or minimises DTO).

    ``outputs`` are the pipeline outputs on the calibration prefix. Ties
    between percentages go to the smaller one.
    """
    objective = objective.lower()
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {OBJECTIVES}")
    grid = sorted(float(p) for p in grid)
    if not grid or any(not 0 < p <= 100 for p in grid):
        raise ValueError(f"grid values must lie in (0, 100]: {grid}")
    if isinstance(score_kind, str):
        score_kind = ScoreKind.parse(score_kind)
    if scores is None:
        scores = score_batch(score_kind, outputs)
    best = None
    for p in grid:
        h = threshold_for_percentage(scores, p)
        sel = apply_selective(h, outputs.base_probs, outputs.debiased_probs, scores)
        try:
            report = evaluate(sel.predictions, labels, groups, class_count, group_count)
        except UndefinedFairnessError as err:
            raise CalibrationError(f"calibration set is degenerate: {err}") from err
        value = _objective_value(report, objective)
        if best is None or value > best[0]:
            best = (value, p, h)
    _, p, h = best
    digest = calibration_digest(outputs, np.asarray(labels), np.asarray(groups))
    return SelectionPolicy(score_kind, h, p, objective, digest)


@dataclass(frozen=True, eq=False)
class SweepRow:
    score_kind: str
    percentage: str
    threshold: float
    selected_fraction: float
    report: object

    def to_dict(self):
        return {
            "score_kind": self.score_kind,
            "percentage": self.percentage,
            "threshold": _encode_float(self.threshold),
            "selected_fraction": self.selected_fraction,
            **self.report.to_dict(),
        }


def sweep_percentages(
    cal_outputs,
    cal_labels,
    cal_groups,
    test_outputs,
    test_labels,
    test_groups,
    score_kinds,
    percentages=(5, 10, 15, "optimal"),
    grid=DEFAULT_GRID,
    objective="ff",
    class_count=None,
    group_count=None,
):
    """One evaluated row per (score kind, percentage); thresholds come from calibration."""
    rows = []
    for kind in score_kinds:
        if isinstance(kind, str):
            kind = ScoreKind.parse(kind)
        cal_scores = score_batch(kind, cal_outputs)
        test_scores = score_batch(kind, test_outputs)
        for p in percentages:
            if p == "optimal":
                policy = calibrate(
                    cal_outputs, cal_labels, cal_groups, kind, grid, objective,
                    class_count, group_count, scores=cal_scores,
                )
                h, label = policy.threshold, f"optimal({policy.calibrated_percentage:g})"
            else:
                h, label = threshold_for_percentage(cal_scores, float(p)), f"{float(p):g}"
            sel = apply_selective(h, test_outputs.base_probs, test_outputs.debiased_probs, test_scores)
            report = evaluate(sel.predictions, test_labels, test_groups, class_count, group_count)
            rows.append(SweepRow(str(kind), label, h, sel.selected_fraction, report))
    return rows


def policy_json(policy):
    return json.dumps(policy.to_dict(), sort_keys=True)
