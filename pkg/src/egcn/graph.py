"""Graph samples, padded batches and the normalized Laplacian."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import CapacityError, StructuralError

SYMMETRY_TOL = 1e-12


def _check_adjacency(adjacency: np.ndarray, where: str = "adjacency") -> np.ndarray:
    a = np.asarray(adjacency, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise StructuralError(f"{where}: expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise StructuralError(f"{where}: non-finite entries")
    if np.any(a < 0):
        raise StructuralError(f"{where}: negative entry {a.min()}")
    asym = np.max(np.abs(a - a.T)) if a.size else 0.0
    if asym > SYMMETRY_TOL:
        raise StructuralError(f"{where}: not symmetric (max asymmetry {asym:.3g})")
    if np.any(np.diag(a) != 0):
        raise StructuralError(f"{where}: diagonal must be zero")
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    """One sample: node features (N x d), symmetric adjacency (N x N), labels."""

    node_features: np.ndarray
    adjacency: np.ndarray
    labels: np.ndarray | None = None
    label_mask: np.ndarray | None = None
    id: str = ""

    def __post_init__(self):
        x = np.array(self.node_features, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise StructuralError(f"graph {self.id!r}: node_features must be N x d with "
                                  f"N, d >= 1, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise StructuralError(f"graph {self.id!r}: non-finite node features")
        a = _check_adjacency(self.adjacency, f"graph {self.id!r} adjacency").copy()
        if a.shape[0] != x.shape[0]:
            raise StructuralError(f"graph {self.id!r}: adjacency is {a.shape} but there "
                                  f"are {x.shape[0]} nodes")
        labels, mask = self.labels, self.label_mask
        if labels is not None:
            labels = np.array(labels, dtype=np.float64).reshape(-1)
            mask = (np.ones(labels.shape, dtype=bool) if mask is None
                    else np.array(mask, dtype=bool).reshape(-1))
            if mask.shape != labels.shape:
                raise StructuralError(f"graph {self.id!r}: label_mask length {mask.size} "
                                      f"!= labels length {labels.size}")
            labels = np.where(mask | np.isfinite(labels), labels, 0.0)
            if not np.all(np.isfinite(labels[mask])):
                raise StructuralError(f"graph {self.id!r}: non-finite label")
            labels.setflags(write=False)
            mask.setflags(write=False)
        elif mask is not None:
            raise StructuralError(f"graph {self.id!r}: label_mask without labels")
        x.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "node_features", x)
        object.__setattr__(self, "adjacency", a)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "label_mask", mask)

    @property
    def num_nodes(self) -> int:
        return self.node_features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.node_features.shape[1]

    @property
    def num_tasks(self) -> int:
        return 0 if self.labels is None else self.labels.size

    def permuted(self, perm: Sequence[int]) -> "Graph":
        """Relabel nodes so that new node i is old node ``perm[i]``."""
        perm = np.asarray(perm)
        return Graph(self.node_features[perm], self.adjacency[np.ix_(perm, perm)],
                     self.labels, self.label_mask, self.id)


@dataclass(frozen=True, eq=False)
class GraphBatch:
    """Zero-padded stack of graphs.

    ``features`` is (B, N_max, d), ``adjacencies`` (B, N_max, N_max);
    ``node_mask[b, i]`` is True iff ``i < node_counts[b]``.
    """

    features: np.ndarray
    adjacencies: np.ndarray
    node_counts: np.ndarray
    node_mask: np.ndarray
    labels: np.ndarray | None = None
    label_masks: np.ndarray | None = None
    ids: tuple = field(default_factory=tuple)

    @property
    def size(self) -> int:
        return self.features.shape[0]

    @property
    def n_max(self) -> int:
        return self.features.shape[1]

    def sample(self, b: int) -> Graph:
        n = int(self.node_counts[b])
        labels = None if self.labels is None else self.labels[b]
        mask = None if self.label_masks is None else self.label_masks[b]
        return Graph(self.features[b, :n], self.adjacencies[b, :n, :n], labels, mask,
                     self.ids[b] if self.ids else "")

    def pair_mask(self) -> np.ndarray:
        """(B, N, N) float mask, 1 where both nodes are valid."""
        m = self.node_mask.astype(np.float64)
        return m[:, :, None] * m[:, None, :]

    def intrinsic_laplacians(self) -> np.ndarray:
        """Normalized Laplacians of the stored adjacencies, padded rows zeroed."""
        return masked_normalized_laplacian(self.adjacencies, self.node_mask)


def degree_vector(adjacency) -> np.ndarray:
    """Row sums of the adjacency."""
    return np.asarray(adjacency, dtype=np.float64).sum(axis=-1)


def normalized_laplacian(adjacency) -> np.ndarray:
    """L = I - D^-1/2 A D^-1/2.

    Zero-degree nodes get ``D^-1/2 = 0``, so their row and column of L are the
    identity row and column.
    """
    a = _check_adjacency(adjacency)
    deg = a.sum(axis=1)
    d_inv_sqrt = np.zeros_like(deg)
    nz = deg > 0
    d_inv_sqrt[nz] = deg[nz] ** -0.5
    lap = np.eye(a.shape[0]) - d_inv_sqrt[:, None] * a * d_inv_sqrt[None, :]
    return 0.5 * (lap + lap.T)


def masked_normalized_laplacian(adjacencies: np.ndarray, node_mask: np.ndarray) -> np.ndarray:
    """Batched normalized Laplacian; rows/columns of padded nodes are all zero."""
    a = np.asarray(adjacencies, dtype=np.float64)
    m = np.asarray(node_mask, dtype=np.float64)
    deg = a.sum(axis=-1)
    d_inv_sqrt = np.where(deg > 0, np.where(deg > 0, deg, 1.0) ** -0.5, 0.0)
    eye = np.eye(a.shape[-1]) * m[:, :, None]
    lap = eye - d_inv_sqrt[:, :, None] * a * d_inv_sqrt[:, None, :]
    lap = 0.5 * (lap + np.swapaxes(lap, -1, -2))
    return lap * m[:, :, None] * m[:, None, :]


def batch_graphs(samples: Sequence[Graph], n_max: int | None = None) -> GraphBatch:
    """Zero-pad ``samples`` to ``n_max`` nodes (default: the largest sample)."""
    samples = list(samples)
    if not samples:
        raise StructuralError("empty batch")
    if n_max is None:
        n_max = max(g.num_nodes for g in samples)
    d = samples[0].feature_dim
    t = samples[0].num_tasks
    for g in samples:
        if g.num_nodes > n_max:
            raise CapacityError(f"sample {g.id!r} has {g.num_nodes} nodes > n_max={n_max}")
        if g.feature_dim != d:
            raise StructuralError(f"sample {g.id!r} has feature dim {g.feature_dim}, "
                                  f"expected {d}")
        if g.num_tasks != t:
            raise StructuralError(f"sample {g.id!r} has {g.num_tasks} tasks, expected {t}")
    b = len(samples)
    feats = np.zeros((b, n_max, d))
    adj = np.zeros((b, n_max, n_max))
    counts = np.array([g.num_nodes for g in samples], dtype=np.int64)
    for i, g in enumerate(samples):
        n = g.num_nodes
        feats[i, :n] = g.node_features
        adj[i, :n, :n] = g.adjacency
    mask = np.arange(n_max)[None, :] < counts[:, None]
    labels = label_masks = None
    if t:
        labels = np.stack([g.labels for g in samples])
        label_masks = np.stack([g.label_mask for g in samples])
    return GraphBatch(feats, adj, counts, mask, labels, label_masks,
                      tuple(g.id for g in samples))
