"""Learned Mahalanobis metric, Gaussian similarity and the residual Laplacian.

The plain-array functions here operate on one sample. :func:`evolved_laplacian_batch`
is the differentiable, padded-batch version used inside the network; the
single-sample :func:`evolved_laplacian` is a thin wrapper around it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .errors import NumericalError, ParameterError, StructuralError
from .graph import normalized_laplacian


@dataclass
class MetricParams:
    """Transform basis ``w_d`` (d x m) defining M = w_d w_dᵀ, plus fixed scalars.

    ``gaussian_sigma`` is the kernel bandwidth; ``mix_sigma`` weights the
    intrinsic Laplacian in the residual (Res = F - mix_sigma * L_orig);
    ``threshold`` prunes weak similarities.
    """

    w_d: np.ndarray
    gaussian_sigma: float = 1.0
    mix_sigma: float = 1.0
    threshold: float = 0.0

    def __post_init__(self):
        w = np.asarray(_raw(self.w_d))
        if w.ndim != 2 or w.shape[1] < 1:
            raise StructuralError(f"w_d must be d x m with m >= 1, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise NumericalError("w_d has non-finite entries")
        if not self.gaussian_sigma > 0:
            raise ParameterError(f"gaussian_sigma must be positive, got {self.gaussian_sigma}")
        if not 0.0 <= self.mix_sigma <= 1.0:
            raise ParameterError(f"mix_sigma must lie in [0, 1], got {self.mix_sigma}")
        if not 0.0 <= self.threshold < 1.0:
            raise ParameterError(f"threshold must lie in [0, 1), got {self.threshold}")


def _raw(v):
    return v.data if isinstance(v, Tensor) else v


def init_metric_weights(d: int, m: int | None = None, rng: np.random.Generator | None = None,
                        noise: float = 1e-3) -> np.ndarray:
    """Identity truncated to d x m plus Gaussian noise."""
    m = d if m is None else m
    rng = np.random.default_rng() if rng is None else rng
    return np.eye(d, m) + noise * rng.standard_normal((d, m))


def mahalanobis_distances(x, w_d) -> np.ndarray:
    """Pairwise sqrt((x_i - x_j)ᵀ w_d w_dᵀ (x_i - x_j)) for the rows of ``x``."""
    x = np.asarray(x, dtype=np.float64)
    w_d = np.asarray(w_d, dtype=np.float64)
    if x.ndim != 2 or w_d.ndim != 2 or x.shape[1] != w_d.shape[0]:
        raise StructuralError(f"mahalanobis_distances: x {x.shape} and w_d {w_d.shape} "
                              "are incompatible")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(w_d))):
        raise NumericalError("mahalanobis_distances: non-finite input")
    z = x @ w_d
    diff = z[:, None, :] - z[None, :, :]
    sq = np.einsum("ijk,ijk->ij", diff, diff)
    sq[(sq < 0) & (sq >= -1e-12)] = 0.0
    return np.sqrt(sq)


def gaussian_similarity(distances, sigma: float) -> np.ndarray:
    """exp(-D / (2 sigma^2)), applied to the distance itself (not its square)."""
    if not sigma > 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    return np.exp(-np.asarray(distances, dtype=np.float64) / (2.0 * sigma * sigma))


def similarity_to_adjacency(similarity, threshold: float = 0.0) -> np.ndarray:
    """Zero the diagonal and every entry below ``threshold``."""
    s = np.array(similarity, dtype=np.float64)
    s[s < threshold] = 0.0
    np.fill_diagonal(s, 0.0)
    return s


def learned_laplacian(x, params: MetricParams) -> np.ndarray:
    """F: normalized Laplacian of the thresholded learned similarity graph."""
    sim = gaussian_similarity(mahalanobis_distances(x, params.w_d), params.gaussian_sigma)
    return normalized_laplacian(similarity_to_adjacency(sim, params.threshold))


def residual_laplacian(x, l_orig, params: MetricParams) -> np.ndarray:
    """Res = F - mix_sigma * L_orig."""
    return evolved_laplacian(x, l_orig, params) - np.asarray(l_orig, dtype=np.float64)


def evolved_laplacian(x, l_orig, params: MetricParams) -> np.ndarray:
    """L_e = Res + L_orig = F + (1 - mix_sigma) L_orig for one sample."""
    x = np.asarray(x, dtype=np.float64)
    l_orig = np.asarray(l_orig, dtype=np.float64)
    if l_orig.shape != (x.shape[0], x.shape[0]):
        raise StructuralError(f"l_orig has shape {l_orig.shape}, expected "
                              f"{(x.shape[0], x.shape[0])}")
    tape = Tape(enabled=False)
    l_e, _ = evolved_laplacian_batch(
        tape.constant(x[None]), tape.constant(params.w_d), l_orig[None],
        np.ones((1, x.shape[0]), dtype=bool), params.gaussian_sigma, params.mix_sigma,
        params.threshold)
    return l_e.data[0]


def evolved_laplacian_batch(x: Tensor, w_d: Tensor, l_orig: np.ndarray, node_mask: np.ndarray,
                            gaussian_sigma: float = 1.0, mix_sigma: float = 1.0,
                            threshold: float = 0.0) -> tuple[Tensor, Tensor]:
    """Differentiable evolved Laplacians for a padded batch.

    ``x`` is (B, N, f), ``w_d`` (f, m), ``l_orig`` (B, N, N) with padded rows
    zero. Returns ``(L_e, S)`` where S is the raw Gaussian similarity (unit
    diagonal, before thresholding). Padded rows/columns of L_e are zero.
    Thresholded entries pass gradient straight through where kept and get zero
    gradient where pruned.
    """
    b, n, f = x.shape
    if w_d.shape[0] != f:
        raise StructuralError(f"w_d has {w_d.shape[0]} rows but features have dim {f}")
    m = w_d.shape[1]
    mask = np.asarray(node_mask, dtype=np.float64)
    pair = mask[:, :, None] * mask[:, None, :]
    z = ad.matmul(x, w_d)
    diff = ad.reshape(z, (b, n, 1, m)) - ad.reshape(z, (b, 1, n, m))
    dist = ad.sqrt(ad.reduce_sum(diff * diff, axis=-1))
    sim = ad.exp(dist * (-1.0 / (2.0 * gaussian_sigma * gaussian_sigma)))
    keep = pair * (1.0 - np.eye(n))
    if threshold > 0:
        keep = keep * (sim.data >= threshold)
    adj = sim * keep
    d_inv_sqrt = ad.rsqrt(ad.sum_rows(adj))
    norm_adj = ad.reshape(d_inv_sqrt, (b, n, 1)) * adj * ad.reshape(d_inv_sqrt, (b, 1, n))
    lap = (np.eye(n) * mask[:, :, None]) - norm_adj
    lap = (lap + ad.transpose(lap)) * 0.5
    if mix_sigma != 1.0:
        lap = lap + (1.0 - mix_sigma) * np.asarray(l_orig, dtype=np.float64)
    return lap, sim
