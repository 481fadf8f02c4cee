"""Training loop, cross-validation, similarity snapshots and the frozen-metric ablation."""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .autodiff import Tape, backward
from .errors import DataError, NumericalError, ParameterError
from .graph import Graph, batch_graphs
from .losses import masked_logistic_loss, weighted_l2_loss
from .metrics import TaskMetric, rmse, roc_auc
from .model import DEFAULT_ARCHITECTURE, EGCN
from .optim import AdamState, adam_step, learning_rate

log = logging.getLogger(__name__)

TASK_TYPES = ("regression", "classification")


@dataclass
class TrainConfig:
    batch_size: int = 256
    lr: float = 0.005
    decay_rate: float = 0.9
    decay_every: int = 50
    max_epochs: int = 50
    K: int = 3
    seed: int = 0
    task_type: str = "regression"
    architecture: list = field(default_factory=lambda: [dict(s) for s in DEFAULT_ARCHITECTURE])
    mix_sigma: float = 1.0
    gaussian_sigma: float = 1.0
    threshold: float = 0.0
    lambda_max: str | float = "auto"
    folds: int = 5
    freeze_metric: bool = False
    task_weights: list | None = None
    validation_fraction: float = 0.1

    def __post_init__(self):
        for name in ("batch_size", "decay_every", "max_epochs", "K", "folds"):
            if int(getattr(self, name)) < 1:
                raise ParameterError(f"{name} must be a positive integer")
        if self.folds < 2:
            raise ParameterError("folds must be >= 2")
        if not self.lr > 0:
            raise ParameterError("lr must be positive")
        if not 0 < self.decay_rate <= 1:
            raise ParameterError("decay_rate must lie in (0, 1]")
        if self.task_type not in TASK_TYPES:
            raise ParameterError(f"task_type must be one of {TASK_TYPES}")
        if not 0 <= self.validation_fraction < 1:
            raise ParameterError("validation_fraction must lie in [0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ParameterError(f"unknown config key(s): {', '.join(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class CurveRecord:
    epoch: int
    split: str
    metric_name: str
    value: float


@dataclass
class TrainResult:
    model: EGCN
    curves: list
    iterations: int

    def curve(self, split: str, metric_name: str) -> np.ndarray:
        return np.array([r.value for r in self.curves
                         if r.split == split and r.metric_name == metric_name])


class TrainingDiverged(NumericalError):
    """Raised when the loss becomes non-finite; carries the last good model."""

    def __init__(self, message, checkpoint: EGCN, epoch: int):
        super().__init__(message)
        self.checkpoint = checkpoint
        self.epoch = epoch


def build_model(config: TrainConfig, in_dim: int, num_tasks: int) -> EGCN:
    return EGCN(in_dim, num_tasks, config.architecture, K=config.K,
                mix_sigma=config.mix_sigma, gaussian_sigma=config.gaussian_sigma,
                threshold=config.threshold, lambda_max=config.lambda_max, seed=config.seed)


def compute_loss(config: TrainConfig, logits, labels, masks):
    if config.task_type == "classification":
        return masked_logistic_loss(logits, labels, masks, config.task_weights)
    return weighted_l2_loss(logits, labels, masks, config.task_weights)


def evaluate(model: EGCN, graphs: Sequence[Graph], config: TrainConfig) -> tuple[float, TaskMetric]:
    """Eval-mode loss and task metric (RMSE or ROC-AUC) over ``graphs``."""
    graphs = list(graphs)
    preds = model.predict(graphs, config.batch_size)
    labels = np.stack([g.labels for g in graphs])
    masks = np.stack([g.label_mask for g in graphs])
    loss = float(compute_loss(config, preds, labels, masks).data)
    if config.task_type == "classification":
        return loss, roc_auc(preds, labels, masks)
    return loss, rmse(preds, labels, masks)


def split_validation(graphs: Sequence[Graph], fraction: float, seed: int):
    """Seeded split into (train, validation) with ``fraction`` of samples held out."""
    graphs = list(graphs)
    n_val = int(round(fraction * len(graphs)))
    if n_val == 0 or n_val == len(graphs):
        return graphs, []
    perm = np.random.default_rng([seed, 1]).permutation(len(graphs))
    val = set(perm[:n_val].tolist())
    return ([g for i, g in enumerate(graphs) if i not in val],
            [g for i, g in enumerate(graphs) if i in val])


def train(dataset: Sequence[Graph], config: TrainConfig,
          validation: Sequence[Graph] | None = None,
          on_epoch_end: Callable[[EGCN, int], None] | None = None) -> TrainResult:
    """Fit an EGCN with Adam on ``dataset``.

    Without an explicit ``validation`` set, ``config.validation_fraction`` of
    the samples is held out (seeded). Curves are recorded at epoch 0 (before
    any update) and after every epoch: the full-train-set loss, validation loss
    and validation metric, all in eval mode. ``on_epoch_end(model, epoch)`` is
    also called for epoch 0.
    """
    train_set = list(dataset)
    if validation is None:
        train_set, validation = split_validation(train_set, config.validation_fraction,
                                                 config.seed)
    validation = list(validation)
    if not train_set:
        raise DataError("empty training set")
    model = build_model(config, train_set[0].feature_dim, train_set[0].num_tasks)
    frozen = model.metric_param_names() if config.freeze_metric else []
    state = AdamState()
    rng = np.random.default_rng(config.seed)
    curves: list[CurveRecord] = []
    metric_name = "roc_auc" if config.task_type == "classification" else "rmse"

    def record(epoch):
        curves.append(CurveRecord(epoch, "train", "loss", evaluate(model, train_set, config)[0]))
        if validation:
            loss, metric = evaluate(model, validation, config)
            curves.append(CurveRecord(epoch, "validation", "loss", loss))
            curves.append(CurveRecord(epoch, "validation", metric_name, metric.mean))
        if on_epoch_end is not None:
            on_epoch_end(model, epoch)

    record(0)
    iteration = 0
    checkpoint = model.copy()
    for epoch in range(1, config.max_epochs + 1):
        perm = rng.permutation(len(train_set))
        try:
            for start in range(0, len(perm), config.batch_size):
                batch = batch_graphs([train_set[i]
                                      for i in perm[start:start + config.batch_size]])
                if not batch.label_masks.any():
                    continue
                tape = Tape()
                logits, _ = model.forward(batch, tape, mode="train")
                loss = compute_loss(config, logits, batch.labels, batch.label_masks)
                model.params.zero_grad()
                backward(tape, loss, model.params)
                adam_step(model.params, state,
                          learning_rate(iteration, config.lr, config.decay_rate,
                                        config.decay_every), frozen)
                iteration += 1
            record(epoch)
        except NumericalError as exc:
            raise TrainingDiverged(
                f"training diverged in epoch {epoch} (iteration {iteration}): {exc}; "
                f"last good checkpoint is from epoch {epoch - 1}", checkpoint,
                epoch - 1) from exc
        checkpoint = model.copy()
        log.debug("epoch %d train loss %.6g", epoch, curves[-1].value)
    return TrainResult(model, curves, iteration)


# ---------------------------------------------------------------------------
# cross-validation

def kfold_indices(n: int, folds: int, seed: int) -> list[np.ndarray]:
    """Seeded partition of range(n) into ``folds`` parts whose sizes differ by <= 1."""
    if folds < 2 or folds > n:
        raise ParameterError(f"cannot split {n} samples into {folds} folds")
    perm = np.random.default_rng([seed, 2]).permutation(n)
    return [np.sort(part) for part in np.array_split(perm, folds)]


class MeanPredictor:
    """Predicts the per-task training mean (a logit of it for classification)."""

    def __init__(self, graphs, task_type="regression"):
        labels = np.stack([g.labels for g in graphs])
        masks = np.stack([g.label_mask for g in graphs])
        counts = np.maximum(masks.sum(axis=0), 1)
        mean = np.where(masks, labels, 0.0).sum(axis=0) / counts
        if task_type == "classification":
            p = np.clip(mean, 1e-6, 1 - 1e-6)
            mean = np.log(p / (1 - p))
        self.value = mean

    def predict(self, graphs, batch_size=None):
        return np.tile(self.value, (len(list(graphs)), 1))


@dataclass
class CVResult:
    metric_name: str
    fold_metrics: list          # one per-task array per fold
    per_task_mean: np.ndarray
    per_task_std: np.ndarray
    mean: float                 # mean over folds of the task-averaged metric
    std: float
    folds: list                 # held-out index arrays


def cross_validate(dataset: Sequence[Graph], config: TrainConfig,
                   method: str = "egcn") -> CVResult:
    """k-fold cross-validation; reports mean and std over folds.

    ``method="mean"`` swaps the network for :class:`MeanPredictor`, a
    constant baseline.
    """
    graphs = list(dataset)
    folds = kfold_indices(len(graphs), config.folds, config.seed)
    metric_fn = roc_auc if config.task_type == "classification" else rmse
    fold_values, fold_means = [], []
    for k, held in enumerate(folds):
        held_set = set(held.tolist())
        train_part = [g for i, g in enumerate(graphs) if i not in held_set]
        test_part = [graphs[i] for i in held]
        if method == "egcn":
            model = train(train_part, config.replace(seed=config.seed + k)).model
        elif method == "mean":
            model = MeanPredictor(train_part, config.task_type)
        else:
            raise ParameterError(f"unknown method {method!r}")
        preds = model.predict(test_part, config.batch_size)
        metric = metric_fn(preds, np.stack([g.labels for g in test_part]),
                           np.stack([g.label_mask for g in test_part]))
        fold_values.append(metric.per_task)
        fold_means.append(metric.mean)
        log.info("fold %d/%d %s %.6g", k + 1, len(folds), metric.name, metric.mean)
    values = np.stack(fold_values)
    with np.errstate(invalid="ignore"):
        per_task_mean = np.nanmean(values, axis=0)
        per_task_std = np.nanstd(values, axis=0)
    return CVResult(metric_fn.__name__, fold_values, per_task_mean, per_task_std,
                    float(np.mean(fold_means)), float(np.std(fold_means)), folds)


# ---------------------------------------------------------------------------
# inspection and ablation

@dataclass
class SimilaritySnapshot:
    matrix: np.ndarray
    sample_id: str
    layer: int
    epoch: int


def snapshot_similarity(model: EGCN, sample: Graph, layer_index: int,
                        epoch: int) -> SimilaritySnapshot:
    """Current learned similarity S of one SGC-LL layer for ``sample``."""
    return SimilaritySnapshot(model.similarity(sample, layer_index).copy(), sample.id,
                              layer_index, epoch)


def epochs_to_reach(curve: np.ndarray, target: float) -> int | None:
    """First epoch index whose value is <= target, or None."""
    hit = np.flatnonzero(np.asarray(curve) <= target)
    return int(hit[0]) if hit.size else None


@dataclass
class AblationRow:
    seed: int
    evolving_val_rmse: float
    frozen_val_rmse: float
    evolving_final_loss: float
    frozen_final_loss: float
    evolving_epochs_to_frozen_loss: int | None
    max_epochs: int

    @property
    def evolving_wins(self) -> bool:
        return self.evolving_val_rmse < self.frozen_val_rmse

    @property
    def speed_ratio(self) -> float:
        if self.evolving_epochs_to_frozen_loss is None:
            return float("inf")
        return self.evolving_epochs_to_frozen_loss / self.max_epochs


def run_ablation(train_set: Sequence[Graph], validation: Sequence[Graph], config: TrainConfig,
                 seeds: Sequence[int]) -> list[AblationRow]:
    """Paired evolving vs frozen-metric runs, one pair per seed.

    The frozen arm uses ``freeze_metric=True`` and ``mix_sigma=1`` so its
    first-layer Laplacian never changes. Validation metric and the epoch at
    which the evolving arm first matches the frozen arm's final train loss are
    reported.
    """
    rows = []
    for seed in seeds:
        evolving = train(train_set, config.replace(seed=seed, freeze_metric=False), validation)
        frozen = train(train_set, config.replace(seed=seed, freeze_metric=True, mix_sigma=1.0),
                       validation)
        e_loss, f_loss = evolving.curve("train", "loss"), frozen.curve("train", "loss")
        rows.append(AblationRow(
            seed,
            float(evolving.curve("validation", "rmse")[-1]),
            float(frozen.curve("validation", "rmse")[-1]),
            float(e_loss[-1]), float(f_loss[-1]),
            epochs_to_reach(e_loss, f_loss[-1]), config.max_epochs))
        log.info("ablation seed %d: evolving %.4g frozen %.4g", seed,
                 rows[-1].evolving_val_rmse, rows[-1].frozen_val_rmse)
    return rows
