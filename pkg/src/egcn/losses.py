"""Masked multi-task losses. Masked entries contribute zero value and zero gradient."""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DataError, StructuralError


def _weights(pred: Tensor, labels, masks, task_weights):
    labels = np.asarray(labels, dtype=np.float64)
    masks = np.asarray(masks, dtype=bool)
    if labels.shape != pred.shape or masks.shape != pred.shape:
        raise StructuralError(f"pred {pred.shape}, labels {labels.shape} and masks "
                              f"{masks.shape} must match")
    t = pred.shape[-1]
    tw = np.ones(t) if task_weights is None else np.asarray(task_weights, dtype=np.float64)
    if tw.shape != (t,) or np.any(tw < 0):
        raise StructuralError(f"task_weights must be {t} non-negative values")
    w = masks * tw
    total = w.sum()
    if total <= 0:
        raise DataError("no supervised signal")
    return np.where(masks, labels, 0.0), masks, w, total


def weighted_l2_loss(pred, labels, masks, task_weights=None) -> Tensor:
    """sum(mask * w_t * (pred - label)^2) / sum(mask * w_t)."""
    pred = pred if isinstance(pred, Tensor) else Tensor(pred)
    labels, _, w, total = _weights(pred, labels, masks, task_weights)
    r = pred - labels
    return ad.reduce_sum(r * r * w) * (1.0 / total)


def masked_logistic_loss(logits, labels, masks, task_weights=None) -> Tensor:
    """Weighted mean binary cross-entropy of sigmoid(logits), log-sum-exp stable."""
    logits = logits if isinstance(logits, Tensor) else Tensor(logits)
    labels, masks, w, total = _weights(logits, labels, masks, task_weights)
    if np.any((labels[masks] != 0) & (labels[masks] != 1)):
        raise DataError("classification labels must be 0 or 1 on unmasked entries")
    # -log sigmoid(z) for y=1 and -log(1 - sigmoid(z)) for y=0 are softplus(-z), softplus(z)
    sign = 1.0 - 2.0 * labels
    return ad.reduce_sum(ad.softplus(logits * sign) * w) * (1.0 / total)
