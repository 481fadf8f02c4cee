"""Synthetic regression data whose target depends on a hidden node metric.

Each sample's intrinsic graph links every node to its nearest neighbours under
plain Euclidean distance. The label, however, is computed from node features
filtered on the graph induced by a hidden projection ``w_star``, so the given
graph is informative but not the one the target was built on.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset_io import DatasetManifest
from .errors import ParameterError
from .graph import Graph, normalized_laplacian
from .metric import (MetricParams, gaussian_similarity, learned_laplacian,
                     mahalanobis_distances)
from .spectral import chebyshev_filter, scale_laplacian


@dataclass
class SyntheticDataset:
    manifest: DatasetManifest
    graphs: list
    w_star: np.ndarray
    theta_star: np.ndarray
    readout: np.ndarray


def hidden_projection(d: int) -> np.ndarray:
    """Axis-aligned metric that stretches the first feature and shrinks the rest."""
    scales = np.full(d, 0.5)
    scales[0] = 3.0
    return np.diag(scales)


def knn_adjacency(x: np.ndarray, k: int, sigma: float = 1.0) -> np.ndarray:
    """Symmetrized k-nearest-neighbour graph with Euclidean Gaussian weights."""
    n = x.shape[0]
    dist = mahalanobis_distances(x, np.eye(x.shape[1]))
    sim = gaussian_similarity(dist, sigma)
    adj = np.zeros((n, n))
    if n == 1:
        return adj
    order = np.argsort(dist + np.diag(np.full(n, np.inf)), axis=1, kind="stable")
    for i in range(n):
        for j in order[i, :min(k, n - 1)]:
            adj[i, j] = adj[j, i] = sim[i, j]
    return adj


def hidden_target(x, w_star, theta_star, readout, sigma: float = 1.0) -> float:
    """Two saturating readouts of the node-summed, hidden-graph-filtered features."""
    lap = learned_laplacian(x, MetricParams(w_star, sigma))
    g = chebyshev_filter(scale_laplacian(lap, 2.0), x, theta_star).sum(axis=0)
    return float(np.tanh(g @ readout) + 0.5 * np.tanh(g @ np.roll(readout, 1)))


def synthesize_hidden_metric_dataset(n_samples: int, n_nodes_range=(6, 12), d: int = 4,
                                     seed: int = 0, neighbors: int = 3,
                                     gaussian_sigma: float = 1.0,
                                     name: str = "hidden_metric") -> SyntheticDataset:
    """Draw ``n_samples`` graphs with standardized regression labels."""
    lo, hi = n_nodes_range
    if n_samples < 2 or not 1 <= lo <= hi or d < 1 or neighbors < 1:
        raise ParameterError("invalid synthetic dataset parameters")
    rng = np.random.default_rng(seed)
    w_star = hidden_projection(d)
    theta_star = np.array([1.0, 1.0])
    readout = rng.standard_normal(d)
    readout /= np.linalg.norm(readout)
    feats, adjs, raw = [], [], []
    for _ in range(n_samples):
        n = int(rng.integers(lo, hi + 1))
        x = rng.standard_normal((n, d))
        feats.append(x)
        adjs.append(knn_adjacency(x, neighbors, gaussian_sigma))
        raw.append(hidden_target(x, w_star, theta_star, readout, gaussian_sigma))
    raw = np.array(raw)
    y = (raw - raw.mean()) / raw.std()
    graphs = [Graph(x, a, [v], [True], f"s{i:05d}")
              for i, (x, a, v) in enumerate(zip(feats, adjs, y))]
    manifest = DatasetManifest(name, "regression", ["target"], d, n_samples,
                               max_degree=hi - 1)
    return SyntheticDataset(manifest, graphs, w_star, theta_star, readout)


def intrinsic_laplacian(graph: Graph) -> np.ndarray:
    return normalized_laplacian(graph.adjacency)
