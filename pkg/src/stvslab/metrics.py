"""
Binary classification statistics with Stable as the positive class.

Class inputs may be :class:`~stvslab.core.Label` values, their string
values, or class indices (0 = stable, 1 = unstable). Scores are P(Stable).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Label
from .errors import DegenerateLabelsError, EmptyInputError, ShapeError, UndefinedMetricError


def is_stable(values) -> np.ndarray:
    out = []
    for v in values:
        if isinstance(v, Label):
            out.append(v is Label.STABLE)
        elif isinstance(v, str):
            out.append(Label(v) is Label.STABLE)
        else:
            out.append(int(v) == 0)
    return np.array(out, dtype=bool)


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def tpr(self) -> float:
        if self.tp + self.fn == 0:
            raise UndefinedMetricError("TPR", "tp+fn")
        return self.tp / (self.tp + self.fn)

    def fpr(self) -> float:
        if self.fp + self.tn == 0:
            raise UndefinedMetricError("FPR", "fp+tn")
        return self.fp / (self.fp + self.tn)


def confusion(preds, labels) -> ConfusionMatrix:
    p = is_stable(preds)
    a = is_stable(labels)
    if p.shape != a.shape:
        raise ShapeError(f"{len(p)} predictions vs {len(a)} labels")
    if len(p) == 0:
        raise EmptyInputError("no samples to evaluate")
    return ConfusionMatrix(
        tp=int(np.sum(p & a)), fp=int(np.sum(p & ~a)),
        fn=int(np.sum(~p & a)), tn=int(np.sum(~p & ~a)),
    )


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise EmptyInputError("empty confusion matrix")
    return (cm.tp + cm.tn) / cm.total


def f1(cm: ConfusionMatrix, mode: str = "standard") -> float:
    """F1 score.

    ``mode="standard"`` is the harmonic mean of precision and recall.
    ``mode="tpr_fpr"`` evaluates ``2*TPR*FPR/(TPR+FPR)`` literally, which is
    kept only for auditing reference figures.
    """
    if mode == "standard":
        if cm.tp + cm.fp == 0:
            raise UndefinedMetricError("precision", "tp+fp")
        if cm.tp + cm.fn == 0:
            raise UndefinedMetricError("recall", "tp+fn")
        precision = cm.tp / (cm.tp + cm.fp)
        recall = cm.tp / (cm.tp + cm.fn)
        if precision + recall == 0:
            return 0.0
        return 2.0 * precision * recall / (precision + recall)
    if mode == "tpr_fpr":
        tpr, fpr = cm.tpr(), cm.fpr()
        if tpr + fpr == 0:
            raise UndefinedMetricError("F1 (tpr_fpr)", "TPR+FPR")
        return 2.0 * tpr * fpr / (tpr + fpr)
    raise ValueError(f"unknown F1 mode {mode!r}")


@dataclass(frozen=True, eq=False)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray

    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def roc_curve(scores, labels) -> RocCurve:
    """Sweep the decision threshold down through every distinct score.

    A sample is called Stable when ``score >= threshold``; equal scores
    always cross the threshold together. The first point is ``(0, 0)`` at
    threshold ``+inf`` and the last is ``(1, 1)``.
    """
    scores = np.asarray(scores, dtype=np.float64)
    pos = is_stable(labels)
    if scores.shape != pos.shape:
        raise ShapeError(f"{len(scores)} scores vs {len(pos)} labels")
    n_pos = int(pos.sum())
    n_neg = len(pos) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabelsError("ROC needs both stable and unstable samples")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    p = pos[order]
    tp = np.cumsum(p)
    fp = np.cumsum(~p)
    # last index of each run of equal scores
    ends = np.nonzero(np.r_[s[1:] != s[:-1], True])[0]
    tpr = np.r_[0.0, tp[ends] / n_pos]
    fpr = np.r_[0.0, fp[ends] / n_neg]
    thr = np.r_[np.inf, s[ends]]
    return RocCurve(fpr, tpr, thr)


def auc(curve: RocCurve) -> float:
    """Trapezoidal area under the curve."""
    x, y = curve.fpr, curve.tpr
    return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1]) * 0.5))


@dataclass
class MetricRow:
    model: str
    otw_steps: int
    accuracy: float
    f1: float
    auc: float
    f1_tpr_fpr: float | None = None
    n: int = 0

    def to_dict(self) -> dict:
        return {"model": self.model, "otw_steps": self.otw_steps, "accuracy": self.accuracy,
                "f1": self.f1, "auc": self.auc, "f1_tpr_fpr": self.f1_tpr_fpr, "n": self.n}


def evaluate_scores(model: str, otw_steps: int, scores, labels):
    """Build a :class:`MetricRow` and ROC curve from P(Stable) scores."""
    scores = np.asarray(scores, dtype=np.float64)
    preds = np.where(scores > 0.5, 0, 1)
    cm = confusion(preds, labels)
    try:
        f1_std = f1(cm)
    except UndefinedMetricError:
        f1_std = float("nan")
    try:
        f1_lit = f1(cm, mode="tpr_fpr")
    except UndefinedMetricError:
        f1_lit = None
    curve = roc_curve(scores, labels)
    row = MetricRow(model, int(otw_steps), accuracy(cm), f1_std, auc(curve), f1_lit, cm.total)
    return row, curve, cm


@dataclass
class EvaluationReport:
    rows: list = field(default_factory=list)
    roc: dict = field(default_factory=dict)  # "model@otw" -> RocCurve
    histories: dict = field(default_factory=dict)  # model name -> list of (epoch, loss, acc)
    annotations: dict = field(default_factory=dict)

    def add(self, row: MetricRow, curve: RocCurve):
        self.rows.append(row)
        self.roc[f"{row.model}@{row.otw_steps}"] = curve

    def to_dict(self) -> dict:
        return {
            "rows": [r.to_dict() for r in self.rows],
            "roc": {k: {"fpr": c.fpr.tolist(), "tpr": c.tpr.tolist(),
                        "thresholds": [None if not np.isfinite(t) else float(t) for t in c.thresholds]}
                    for k, c in self.roc.items()},
            "histories": self.histories,
            "annotations": self.annotations,
        }


# Reference figures from a 39-bus benchmark (PSD-BPA simulations), used only to
# annotate reports. Synthetic data cannot reproduce them.
REFERENCE_TABLE = {
    ("lstm", 3): (0.9508, 0.9479, 0.9855),
    ("lstm", 6): (0.9672, 0.9651, 0.9936),
    ("lstm", 9): (0.9754, 0.9738, 0.9954),
    ("lstm", 12): (0.9836, 0.9825, 0.9963),
    ("dt", 3): (0.9221, 0.9183, 0.9392),
    ("dt", 6): (0.9303, 0.9269, 0.9459),
    ("dt", 9): (0.9344, 0.9313, 0.9482),
    ("dt", 12): (0.9344, 0.9313, 0.9482),
    ("svm", 3): (0.8770, 0.8646, 0.9509),
    ("svm", 6): (0.8770, 0.8646, 0.9672),
    ("svm", 9): (0.8770, 0.8646, 0.9757),
    ("svm", 12): (0.8770, 0.8646, 0.9781),
}
