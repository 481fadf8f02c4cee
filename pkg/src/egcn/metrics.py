"""Masked per-task evaluation metrics: RMSE and ROC-AUC."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import StructuralError


@dataclass
class TaskMetric:
    """Per-task values (NaN for excluded tasks) and their unweighted mean."""

    name: str
    per_task: np.ndarray
    mean: float
    excluded: list = field(default_factory=list)


def _prepare(scores, labels, masks):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if masks is None:
        masks = np.ones(scores.shape, dtype=bool)
    masks = np.asarray(masks, dtype=bool)
    if scores.ndim == 1:
        scores, labels, masks = scores[:, None], labels[:, None], masks[:, None]
    if scores.shape != labels.shape or scores.shape != masks.shape:
        raise StructuralError(f"scores {scores.shape}, labels {labels.shape}, masks "
                              f"{masks.shape} must match")
    return scores, labels, masks


def _summarize(name, values, excluded):
    kept = values[~np.isnan(values)]
    mean = float(kept.mean()) if kept.size else float("nan")
    return TaskMetric(name, values, mean, excluded)


def rmse(pred, labels, masks=None) -> TaskMetric:
    """Masked root-mean-square error per task; tasks with no labels are excluded."""
    pred, labels, masks = _prepare(pred, labels, masks)
    values = np.full(pred.shape[1], np.nan)
    excluded = []
    for t in range(pred.shape[1]):
        m = masks[:, t]
        if not m.any():
            excluded.append(t)
            continue
        r = pred[m, t] - labels[m, t]
        values[t] = np.sqrt(np.mean(r * r))
    return _summarize("rmse", values, excluded)


def auc_single(scores, labels) -> float:
    """P(random positive outranks random negative), ties worth one half.

    Uses the Mann-Whitney rank statistic with average ranks for ties. Ranks are
    kept doubled so the numerator is an exact integer.
    """
    scores = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(labels) == 1
    n_pos = int(pos.sum())
    n_neg = scores.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise StructuralError("AUC needs at least one positive and one negative")
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    # tie groups [start, end) in sorted order; doubled average rank = start + end + 1
    starts = np.flatnonzero(np.r_[True, sorted_scores[1:] != sorted_scores[:-1]])
    ends = np.r_[starts[1:], scores.size]
    doubled = np.repeat(starts + ends + 1, ends - starts)
    ranks2 = np.empty(scores.size, dtype=np.int64)
    ranks2[order] = doubled
    u2 = int(ranks2[pos].sum()) - n_pos * (n_pos + 1)
    return u2 / (2 * n_pos * n_neg)


def roc_auc(scores, labels, masks=None) -> TaskMetric:
    """Per-task ROC-AUC over unmasked entries; single-class tasks are excluded."""
    scores, labels, masks = _prepare(scores, labels, masks)
    values = np.full(scores.shape[1], np.nan)
    excluded = []
    for t in range(scores.shape[1]):
        m = masks[:, t]
        y = labels[m, t]
        if not ((y == 1).any() and (y != 1).any()):
            excluded.append(t)
            continue
        values[t] = auc_single(scores[m, t], y)
    return _summarize("roc_auc", values, excluded)
