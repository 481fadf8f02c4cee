"""K-hop spectral filtering with Chebyshev polynomials of the scaled Laplacian."""
from __future__ import annotations

import numpy as np

from .autodiff import Tensor
from .errors import NumericalError, ParameterError, StructuralError

NORMALIZED_LAMBDA_MAX = 2.0


def scale_laplacian(lap, lambda_max: float):
    """Map the spectrum [0, lambda_max] onto [-1, 1]: (2 / lambda_max) L - I."""
    if not lambda_max > 0:
        raise ParameterError(f"lambda_max must be positive, got {lambda_max}")
    lap = np.asarray(lap, dtype=np.float64)
    return (2.0 / lambda_max) * lap - np.eye(lap.shape[-1])


def chebyshev_filter(l_tilde, x, theta):
    """Return sum_k theta[k] T_k(l_tilde) x by the three-term recursion.

    Works on plain arrays and on :class:`~egcn.autodiff.Tensor` operands alike;
    leading batch axes broadcast. ``theta`` holds K >= 1 coefficients. Only two
    (N x d) panels are carried; T_k(l_tilde) is never formed.
    """
    l_shape, x_shape = np.shape(_data(l_tilde)), np.shape(_data(x))
    if len(l_shape) < 2 or l_shape[-1] != l_shape[-2]:
        raise StructuralError(f"chebyshev_filter: Laplacian must be square, got {l_shape}")
    if len(x_shape) < 2 or x_shape[-2] != l_shape[-1]:
        raise StructuralError(
            f"chebyshev_filter: signal shape {x_shape} does not match Laplacian {l_shape}")
    k = np.shape(_data(theta))[-1] if np.ndim(_data(theta)) else 0
    if np.ndim(_data(theta)) != 1 or k < 1:
        raise StructuralError(f"chebyshev_filter: theta must be a non-empty vector, "
                              f"got shape {np.shape(_data(theta))}")
    t_prev, t_cur = x, None
    out = theta[0] * x
    if k > 1:
        t_cur = l_tilde @ x
        out = out + theta[1] * t_cur
    for i in range(2, k):
        t_prev, t_cur = t_cur, 2.0 * (l_tilde @ t_cur) - t_prev
        out = out + theta[i] * t_cur
    return out


def _data(v):
    return v.data if isinstance(v, Tensor) else v


def chebyshev_polynomial(values, theta) -> np.ndarray:
    """Evaluate sum_k theta[k] T_k(v) elementwise on scalar ``values``."""
    v = np.asarray(values, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    t_prev, t_cur = np.ones_like(v), v
    out = theta[0] * t_prev
    if theta.size > 1:
        out = out + theta[1] * t_cur
    for c in theta[2:]:
        t_prev, t_cur = t_cur, 2.0 * v * t_cur - t_prev
        out = out + c * t_cur
    return out


def spectral_oracle(lap, x, theta, lambda_max: float = NORMALIZED_LAMBDA_MAX) -> np.ndarray:
    """Reference filter through the dense graph Fourier basis: U g(Λ) Uᵀ x.

    Test-only: O(N^3) eigendecomposition.
    """
    if not lambda_max > 0:
        raise ParameterError(f"lambda_max must be positive, got {lambda_max}")
    lap = np.asarray(lap, dtype=np.float64)
    try:
        evals, evecs = np.linalg.eigh(lap)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from None
    response = chebyshev_polynomial(2.0 * evals / lambda_max - 1.0, theta)
    return evecs @ (response[:, None] * (evecs.T @ np.asarray(x, dtype=np.float64)))


def estimate_lambda_max(lap, mode: str = "fixed", rtol: float = 1e-8,
                        max_iter: int = 1000, seed: int = 0) -> float:
    """Upper spectral bound used to scale a Laplacian.

    ``mode="fixed"`` returns 2.0, exact for normalized Laplacians. ``mode="exact"``
    runs power iteration until the Rayleigh quotient changes by less than
    ``rtol`` (relative).
    """
    if mode == "fixed":
        return NORMALIZED_LAMBDA_MAX
    if mode != "exact":
        raise ParameterError(f"unknown lambda_max mode {mode!r}")
    lap = np.asarray(lap, dtype=np.float64)
    n = lap.shape[0]
    v = np.random.default_rng(seed).standard_normal(n)
    v /= np.linalg.norm(v)
    prev = None
    for _ in range(max_iter):
        w = lap @ v
        rq = float(v @ w)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        if prev is not None and abs(rq - prev) <= rtol * max(abs(rq), 1e-300):
            return float(v @ lap @ v)
        prev = rq
    raise NumericalError(f"power iteration did not converge in {max_iter} iterations; "
                         f"last Rayleigh quotients {prev!r}, {rq!r}")
