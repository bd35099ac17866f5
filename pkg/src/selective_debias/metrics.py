"""Accuracy, equal-opportunity fairness, DTO, FF-score and oracle rejection curves.

All values are fractions in [0, 1]. Only :meth:`EvaluationReport.display`
switches to the x100 presentation scale.
"""

import math
from dataclasses import dataclass

import numpy as np

CURVE_POINTS = 100
TIE_ATOL = 1e-12


class UndefinedFairnessError(ValueError):
    pass


def tpr_counts(predictions, labels, groups, class_count, group_count):
    """True-positive and positive counts per (class, group) cell."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    groups = np.asarray(groups)
    pos = np.zeros((class_count, group_count), dtype=np.int64)
    tp = np.zeros((class_count, group_count), dtype=np.int64)
    np.add.at(pos, (labels, groups), 1)
    hit = predictions == labels
    np.add.at(tp, (labels[hit], groups[hit]), 1)
    return tp, pos


def fairness_from_counts(tp, pos):
    """``1 - delta`` with delta the RMS deviation of TPRs from their per-class mean.

    Cells without positives are left out of both the class mean and the sum.
    """
    with np.errstate(invalid="ignore", divide="ignore"):
        tpr = np.where(pos > 0, tp / np.maximum(pos, 1), np.nan)
    present = pos > 0
    if np.any(present.sum(axis=1) < 2):
        bad = np.flatnonzero(present.sum(axis=1) < 2).tolist()
        raise UndefinedFairnessError(f"classes {bad} have positives in fewer than two groups")
    class_mean = np.nanmean(tpr, axis=1, keepdims=True)
    sq = np.where(present, (tpr - class_mean) ** 2, 0.0)
    delta = math.sqrt(sq.sum() / tpr.shape[0])
    return 1.0 - delta, tpr


def equal_opportunity(predictions, labels, groups, class_count=None, group_count=None):
    """Equal-opportunity fairness and the per-(class, group) TPR table (NaN = no positives)."""
    labels = np.asarray(labels, dtype=np.int64)
    groups = np.asarray(groups, dtype=np.int64)
    c = int(labels.max()) + 1 if class_count is None else class_count
    g = int(groups.max()) + 1 if group_count is None else group_count
    tp, pos = tpr_counts(predictions, labels, groups, c, g)
    return fairness_from_counts(tp, pos)


def aggregate(accuracy, fairness):
    """``(dto, ff_score)``: distance to (1, 1) and harmonic mean."""
    for name, v in (("accuracy", accuracy), ("fairness", fairness)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {v}")
    if accuracy + fairness == 0:
        raise ValueError("FF-score is undefined when accuracy and fairness are both 0")
    dto = math.hypot(1.0 - accuracy, 1.0 - fairness)
    ff = 2.0 * accuracy * fairness / (accuracy + fairness)
    return dto, ff


@dataclass(frozen=True, eq=False)
class EvaluationReport:
    accuracy: float
    fairness: float
    dto: float
    ff_score: float
    tpr_table: np.ndarray
    n: int

    def to_dict(self):
        return {
            "accuracy": self.accuracy,
            "fairness": self.fairness,
            "dto": self.dto,
            "ff_score": self.ff_score,
            "n": self.n,
            "tpr_table": [[None if np.isnan(v) else float(v) for v in row] for row in self.tpr_table],
        }

    def display(self):
        """Table-style row on the x100 scale, one decimal."""
        return {
            "fairness": round(100 * self.fairness, 1),
            "accuracy": round(100 * self.accuracy, 1),
            "dto": round(100 * self.dto, 1),
            "ff_score": round(100 * self.ff_score, 1),
        }


def evaluate(predictions, labels, groups, class_count=None, group_count=None):
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    acc = float(np.mean(predictions == labels))
    fair, table = equal_opportunity(predictions, labels, groups, class_count, group_count)
    dto, ff = aggregate(acc, fair)
    return EvaluationReport(acc, fair, dto, ff, table, int(labels.size))


@dataclass(frozen=True, eq=False)
class RejectionCurve:
    fractions: np.ndarray
    values: np.ndarray

    @property
    def auc(self):
        return float(np.mean(self.values))

    def rows(self):
        return list(zip(self.fractions.tolist(), self.values.tolist()))


def correction_budgets(n_errors, points=CURVE_POINTS):
    """Corrections applied at curve point ``k``: ``ceil(k / points * n_errors)``."""
    return [math.ceil(k * n_errors / points) for k in range(points)]


def _error_indices(predictions, labels):
    return np.flatnonzero(np.asarray(predictions) != np.asarray(labels))


def accuracy_oracle_order(predictions, labels):
    """Erroneous instances in ascending index order."""
    return _error_indices(predictions, labels)


def fairness_oracle_order(predictions, labels, groups, class_count=None, group_count=None):
    """Greedy correction order maximising fairness after every step.

    Correcting an error only bumps the true-positive count of its own
    (true class, group) cell, so candidates are compared cell by cell; the
    lowest remaining index in each cell represents it. Ties (within 1e-12)
    go to the lowest instance index.
    """
    labels = np.asarray(labels, dtype=np.int64)
    groups = np.asarray(groups, dtype=np.int64)
    c = int(labels.max()) + 1 if class_count is None else class_count
    g = int(groups.max()) + 1 if group_count is None else group_count
    tp, pos = tpr_counts(predictions, labels, groups, c, g)
    fairness_from_counts(tp, pos)  # raises if undefined
    queues = {}
    for i in _error_indices(predictions, labels):
        queues.setdefault((labels[i], groups[i]), []).append(int(i))
    heads = {cell: 0 for cell in queues}
    order = []
    while heads:
        best = None
        for cell, h in heads.items():
            idx = queues[cell][h]
            tp[cell] += 1
            f, _ = fairness_from_counts(tp, pos)
            tp[cell] -= 1
            if best is None or f > best[0] + TIE_ATOL or (abs(f - best[0]) <= TIE_ATOL and idx < best[1]):
                best = (f, idx, cell)
        _, idx, cell = best
        order.append(idx)
        tp[cell] += 1
        heads[cell] += 1
        if heads[cell] == len(queues[cell]):
            del heads[cell]
    return np.array(order, dtype=np.int64)


def rejection_curves(predictions, labels, groups, order, class_count=None, group_count=None):
    """Accuracy and fairness after correcting ``order`` prefixes at the 100 budgets."""
    labels = np.asarray(labels, dtype=np.int64)
    groups = np.asarray(groups, dtype=np.int64)
    preds = np.array(predictions, dtype=np.int64, copy=True)
    c = int(labels.max()) + 1 if class_count is None else class_count
    g = int(groups.max()) + 1 if group_count is None else group_count
    n = labels.size
    budgets = correction_budgets(len(order))
    tp, pos = tpr_counts(preds, labels, groups, c, g)
    correct = int(np.sum(preds == labels))
    acc, fair = [], []
    done = 0
    for b in budgets:
        for i in order[done:b]:
            tp[labels[i], groups[i]] += 1
            correct += 1
        done = b
        acc.append(correct / n)
        fair.append(fairness_from_counts(tp, pos)[0])
    fractions = np.arange(CURVE_POINTS) / CURVE_POINTS
    return RejectionCurve(fractions, np.array(acc)), RejectionCurve(fractions, np.array(fair))


def oracle_curves(predictions, labels, groups, oracle="accuracy", class_count=None, group_count=None):
    """Accuracy, fairness and FF-score curves under the named oracle's correction order."""
    if oracle == "accuracy":
        order = accuracy_oracle_order(predictions, labels)
    elif oracle == "fairness":
        order = fairness_oracle_order(predictions, labels, groups, class_count, group_count)
    else:
        raise ValueError(f"unknown oracle {oracle!r}")
    acc, fair = rejection_curves(predictions, labels, groups, order, class_count, group_count)
    return {"accuracy": acc, "fairness": fair, "ff": ff_curve(acc, fair)}


def oracle_accuracy_curve(predictions, labels):
    labels = np.asarray(labels)
    order = accuracy_oracle_order(predictions, labels)
    n = labels.size
    base = int(np.sum(np.asarray(predictions) == labels))
    values = np.array([(base + b) / n for b in correction_budgets(len(order))])
    return RejectionCurve(np.arange(CURVE_POINTS) / CURVE_POINTS, values)


def oracle_fairness_curve(predictions, labels, groups, class_count=None, group_count=None):
    return oracle_curves(predictions, labels, groups, "fairness", class_count, group_count)["fairness"]


def ff_curve(acc_curve, fair_curve):
    if not np.array_equal(acc_curve.fractions, fair_curve.fractions):
        raise ValueError("curves do not share a grid")
    a, f = acc_curve.values, fair_curve.values
    with np.errstate(invalid="ignore", divide="ignore"):
        ff = np.where(a + f > 0, 2 * a * f / (a + f), 0.0)
    return RejectionCurve(acc_curve.fractions, ff)


def curve_aucs(acc_curve, fair_curve):
    """FR-AUC, Acc-AUC and FF-AUC (means over the 100 curve points)."""
    return {
        "fr_auc": fair_curve.auc,
        "acc_auc": acc_curve.auc,
        "ff_auc": ff_curve(acc_curve, fair_curve).auc,
    }
