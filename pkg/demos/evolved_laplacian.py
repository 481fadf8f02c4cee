"""How the learned metric reshapes a graph.

Nodes are compared under a Mahalanobis distance, turned into a Gaussian
similarity, and the Laplacian of that similarity graph is added to the
intrinsic one.
"""
import numpy as np

from egcn.graph import normalized_laplacian
from egcn.metric import MetricParams, evolved_laplacian, gaussian_similarity, mahalanobis_distances
from egcn.synthetic import knn_adjacency

rng = np.random.default_rng(3)
x = rng.standard_normal((6, 4))
l_orig = normalized_laplacian(knn_adjacency(x, 2))

# Identity metric: plain Euclidean distances.
identity = MetricParams(np.eye(4))
print("Euclidean similarity:\n", np.round(gaussian_similarity(mahalanobis_distances(x, identity.w_d), 1.0), 2))

# Stretch the first feature: nodes that differ there now look far apart.
stretched = MetricParams(np.diag([3.0, 0.5, 0.5, 0.5]))
print("stretched similarity:\n", np.round(gaussian_similarity(mahalanobis_distances(x, stretched.w_d), 1.0), 2))

for mix in (1.0, 0.5, 0.0):
    le = evolved_laplacian(x, l_orig, MetricParams(stretched.w_d, mix_sigma=mix))
    print(f"mix_sigma={mix}: top eigenvalue of L_e = {np.linalg.eigvalsh(le).max():.3f}")

# Pruning weak similarities sparsifies the learned graph.
for tau in (0.0, 0.3, 0.7):
    le = evolved_laplacian(x, l_orig, MetricParams(stretched.w_d, threshold=tau))
    print(f"threshold={tau}: nonzero off-diagonals in L_e = {int((np.abs(le - np.diag(np.diag(le))) > 0).sum())}")
