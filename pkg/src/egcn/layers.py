"""Differentiable network layers over padded graph batches.

Every layer takes node features as a (B, N_max, f) :class:`Tensor` together with
the :class:`GraphBatch` carrying structure and masks, and keeps padded rows at
exactly zero.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ParameterError, StructuralError
from .graph import GraphBatch
from .metric import MetricParams, evolved_laplacian_batch
from .spectral import NORMALIZED_LAMBDA_MAX, chebyshev_filter

ACTIVATIONS = ("relu", "identity")
BN_EPS = 1e-5
BN_MOMENTUM = 0.9


@dataclass
class SgcLayerParams:
    """Parameters of one SGC-LL layer.

    ``theta`` (K,), ``w_k`` (f_in, f_out), ``b_k`` (f_out,) and ``metric.w_d``
    may be arrays or tape tensors. ``lambda_max`` is ``"auto"`` (2.0 when
    ``mix_sigma == 1``, otherwise the exact top eigenvalue), ``"fixed"``,
    ``"exact"`` or a positive number.
    """

    theta: np.ndarray
    w_k: np.ndarray
    b_k: np.ndarray
    metric: MetricParams
    activation: str = "relu"
    lambda_max: str | float = "auto"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ParameterError(f"unknown activation {self.activation!r}")

    @property
    def num_parameters(self) -> int:
        return sum(np.size(_raw(p)) for p in (self.theta, self.w_k, self.b_k, self.metric.w_d))


@dataclass
class HeadParams:
    """One dense leaf per task: weights (h, 1) and bias (1,)."""

    weights: Sequence
    biases: Sequence

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise StructuralError("head needs one weight and one bias per task")

    @property
    def num_tasks(self) -> int:
        return len(self.weights)


def _raw(v):
    return v.data if isinstance(v, Tensor) else np.asarray(v)


def _as_tensor(v, tape) -> Tensor:
    return v if isinstance(v, Tensor) else Tensor(v, tape)


def _node_mask(batch: GraphBatch) -> np.ndarray:
    return batch.node_mask.astype(np.float64)[:, :, None]


def activate(x: Tensor, name: str) -> Tensor:
    if name == "relu":
        return ad.relu(x)
    if name == "identity":
        return x
    raise ParameterError(f"unknown activation {name!r}")


def sgc_ll_forward(tape: ad.Tape, x: Tensor, batch: GraphBatch, intrinsic: np.ndarray,
                   params: SgcLayerParams, name: str = "sgc_ll"):
    """Spectral convolution on the evolved Laplacian, then x W + b, then activation.

    Returns ``(out, evolved, similarity)``; ``evolved`` and ``similarity`` are
    (B, N, N) tensors.
    """
    x = _as_tensor(x, tape)
    w_k = _as_tensor(params.w_k, tape)
    w_d = _as_tensor(params.metric.w_d, tape)
    theta = _as_tensor(params.theta, tape)
    b_k = _as_tensor(params.b_k, tape)
    f = x.shape[-1]
    if w_k.shape[0] != f or w_d.shape[0] != f:
        raise StructuralError(f"layer {name}: input feature dim {f} does not match "
                              f"w_k {w_k.shape} / w_d {w_d.shape}")
    metric = params.metric
    evolved, sim = evolved_laplacian_batch(x, w_d, intrinsic, batch.node_mask,
                                           metric.gaussian_sigma, metric.mix_sigma,
                                           metric.threshold)
    mask = batch.node_mask.astype(np.float64)
    eye = np.eye(x.shape[1]) * mask[:, :, None]
    mode = params.lambda_max
    if mode == "auto":
        mode = "fixed" if metric.mix_sigma == 1.0 else "exact"
    if mode == "fixed":
        l_tilde = evolved * (2.0 / NORMALIZED_LAMBDA_MAX) - eye
    elif mode == "exact":
        l_tilde = evolved * ad.divide(2.0, ad.top_eigenvalue(evolved)) - eye
    elif isinstance(mode, (int, float)) and mode > 0:
        l_tilde = evolved * (2.0 / float(mode)) - eye
    else:
        raise ParameterError(f"layer {name}: bad lambda_max {params.lambda_max!r}")
    filtered = chebyshev_filter(l_tilde, x, theta)
    out = (filtered @ w_k + b_k) * mask[:, :, None]
    return activate(out, params.activation), evolved, sim


def pooling_sets(batch: GraphBatch) -> np.ndarray:
    """Closed neighbourhoods on the intrinsic graph, restricted to valid nodes."""
    mask = batch.node_mask
    member = (batch.adjacencies > 0) | np.eye(batch.n_max, dtype=bool)
    return member & mask[:, :, None] & mask[:, None, :]


def graph_max_pool(x: Tensor, batch: GraphBatch) -> Tensor:
    """Replace each feature of node v by its max over v and v's neighbours."""
    return ad.max_over_set(x, pooling_sets(batch))


def graph_gather(x: Tensor, batch: GraphBatch) -> Tensor:
    """Sum valid node features into one (B, f) graph representation."""
    return ad.reduce_sum(x * _node_mask(batch), axis=1)


def batch_norm_forward(x: Tensor, batch: GraphBatch, scale, shift, buffers: dict,
                       mode: str = "train", momentum: float = BN_MOMENTUM,
                       eps: float = BN_EPS) -> Tensor:
    """Per-feature normalization over all valid nodes of the batch.

    ``buffers`` holds ``running_mean`` and ``running_var``; train mode updates
    them in place as ``momentum * running + (1 - momentum) * batch_stat``.
    """
    m = _node_mask(batch)
    tape = x.tape
    scale, shift = _as_tensor(scale, tape), _as_tensor(shift, tape)
    if mode == "train":
        count = m.sum()
        if count < 2:
            raise StructuralError("batch norm in train mode needs at least 2 valid nodes")
        mean = ad.reduce_sum(x * m, axis=(0, 1)) * (1.0 / count)
        centered = (x - mean) * m
        var = ad.reduce_sum(centered * centered, axis=(0, 1)) * (1.0 / count)
        xhat = centered * ad.rsqrt(var + eps)
        buffers["running_mean"] = momentum * buffers["running_mean"] + (1 - momentum) * mean.data
        buffers["running_var"] = momentum * buffers["running_var"] + (1 - momentum) * var.data
    elif mode == "eval":
        xhat = (x - buffers["running_mean"]) * (1.0 / np.sqrt(buffers["running_var"] + eps))
    else:
        raise ParameterError(f"unknown batch-norm mode {mode!r}")
    return (xhat * scale + shift) * m


def dense_forward(h: Tensor, weight, bias, activation: str = "relu") -> Tensor:
    tape = h.tape
    return activate(h @ _as_tensor(weight, tape) + _as_tensor(bias, tape), activation)


def multitask_head_forward(gathered: Tensor, params: HeadParams) -> Tensor:
    """(B, h) graph features -> (B, T) logits, one affine leaf per task."""
    tape = gathered.tape
    cols = [gathered @ _as_tensor(w, tape) + _as_tensor(b, tape)
            for w, b in zip(params.weights, params.biases)]
    if cols[0].shape[-2:] != (gathered.shape[0], 1):
        raise StructuralError(f"head weights must be (h, 1), got {np.shape(_raw(params.weights[0]))}")
    return cols[0] if len(cols) == 1 else ad.concat(cols, axis=-1)
