"""ROC curve and AUC."""
from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from .errors import LengthMismatch, SingleClass


def roc_auc(scores, labels) -> float:
    """Mann-Whitney form: P(score+ > score-) + 0.5 P(tie)."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    if s.shape != y.shape:
        raise LengthMismatch(f"{s.shape} scores vs {y.shape} labels")
    pos = y == 1
    n1 = int(pos.sum())
    n0 = len(y) - n1
    if n1 == 0 or n0 == 0:
        raise SingleClass("AUC needs both classes")
    ranks = rankdata(s)  # midranks; sums of halves are exact in binary floating point
    u = ranks[pos].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n1 * n0))


def roc_curve(scores, labels) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(fpr, tpr, thresholds) from a sweep over distinct scores, highest first."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    n1 = int((y == 1).sum())
    n0 = len(y) - n1
    if n1 == 0 or n0 == 0:
        raise SingleClass("ROC needs both classes")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    last = np.append(np.flatnonzero(np.diff(s) != 0), len(s) - 1)
    tp = np.cumsum(y == 1)[last]
    fp = np.cumsum(y != 1)[last]
    tpr = np.concatenate([[0.0], tp / n1])
    fpr = np.concatenate([[0.0], fp / n0])
    thr = np.concatenate([[np.inf], s[last]])
    return fpr, tpr, thr


def auc_or_none(scores, labels):
    try:
        return roc_auc(scores, labels)
    except SingleClass:
        return None
