"""Chebyshev filtering agrees with filtering in the Laplacian eigenbasis.

The recursion never forms an eigendecomposition, yet for a K-term
polynomial it reproduces U g(Λ) Uᵀ x to rounding error.
"""
import numpy as np

from egcn.graph import normalized_laplacian
from egcn.spectral import chebyshev_filter, scale_laplacian, spectral_oracle

rng = np.random.default_rng(0)
n, d = 9, 3
upper = np.triu(rng.random((n, n)) < 0.4, k=1) * rng.uniform(0.5, 2.0, (n, n))
adjacency = upper + upper.T
lap = normalized_laplacian(adjacency)
print("eigenvalues of L:", np.round(np.linalg.eigvalsh(lap), 3))

x = rng.standard_normal((n, d))
theta = np.array([0.5, -1.0, 0.25, 0.1])

fast = chebyshev_filter(scale_laplacian(lap, 2.0), x, theta)
exact = spectral_oracle(lap, x, theta, 2.0)
print("max |recursion - eigenbasis|:", np.abs(fast - exact).max())

# A single-term filter is just a rescaling of x.
print("theta=[2] gives 2x:", np.allclose(chebyshev_filter(scale_laplacian(lap, 2.0), x, [2.0]), 2 * x))
