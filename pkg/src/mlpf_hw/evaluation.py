"""ROC curves and AUC for scored signal/noise decisions.

Convention shared with the classifier: ``score >= threshold`` means
signal (positive).  Ties between a signal and a noise score earn half
credit, which the trapezoidal area gives automatically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class EvaluationError(ValueError):
    pass


@dataclass
class RocCurve:
    thresholds: np.ndarray   # +inf first, then distinct scores descending
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float

    @property
    def points(self):
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))

    def to_csv(self) -> str:
        rows = ["threshold,fpr,tpr"]
        rows += [f"{t!r},{f!r},{p!r}" for t, f, p in
                 zip(self.thresholds.astype(float).tolist(), self.fpr.tolist(), self.tpr.tolist())]
        return "\n".join(rows) + "\n"


def _check(scores, labels):
    scores = np.asarray(scores)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise EvaluationError("scores and labels must be 1-D and the same length")
    if np.issubdtype(scores.dtype, np.floating) and np.isnan(scores).any():
        raise EvaluationError("scores contain NaN")
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == labels.size:
        raise EvaluationError("ROC needs both signal and noise samples")
    return scores, labels


def _counts(scores, labels):
    """Cumulative (TP, FP) at each distinct score, thresholds descending."""
    order = np.argsort(-scores if np.issubdtype(scores.dtype, np.floating)
                       else -scores.astype(np.float64), kind="stable")
    s, lab = scores[order], labels[order]
    last = np.r_[np.flatnonzero(s[1:] != s[:-1]), s.size - 1]
    tp = np.cumsum(lab, dtype=np.int64)[last]
    fp = (last + 1) - tp
    return s[last], tp, fp


def roc_curve(scores, labels) -> RocCurve:
    scores, labels = _check(scores, labels)
    thr, tp, fp = _counts(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    tp = np.r_[0, tp]
    fp = np.r_[0, fp]
    # integer trapezoid: sum (dFP * (TP_i + TP_{i-1})) / (2 P N)
    twice_area = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
    return RocCurve(np.r_[np.inf, thr.astype(np.float64)], fp / n_neg, tp / n_pos,
                    twice_area / (2 * n_pos * n_neg))


def auc(curve: RocCurve) -> float:
    """Trapezoidal area under an ROC curve's points."""
    f, t = curve.fpr, curve.tpr
    return float(np.sum(np.diff(f) * (t[1:] + t[:-1])) / 2)


def auc_score(scores, labels) -> float:
    return roc_curve(scores, labels).auc


def tpr_fpr_at(scores, labels, threshold):
    scores, labels = _check(scores, labels)
    pred = scores >= threshold
    tpr = np.count_nonzero(pred & labels) / np.count_nonzero(labels)
    fpr = np.count_nonzero(pred & ~labels) / np.count_nonzero(~labels)
    return float(tpr), float(fpr)
