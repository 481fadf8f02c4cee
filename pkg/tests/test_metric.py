import numpy as np
import pytest

from egcn import autodiff as ad
from egcn.autodiff import Tape, backward, finite_difference
from egcn.errors import NumericalError, ParameterError
from egcn.graph import normalized_laplacian
from egcn.metric import (MetricParams, evolved_laplacian, evolved_laplacian_batch,
                         gaussian_similarity, init_metric_weights, learned_laplacian,
                         mahalanobis_distances, residual_laplacian, similarity_to_adjacency)

from conftest import permutation_matrix, random_adjacency


def test_identity_metric_is_euclidean(rng):
    x = rng.standard_normal((5, 3))
    want = np.linalg.norm(x[:, None] - x[None], axis=-1)
    np.testing.assert_allclose(mahalanobis_distances(x, np.eye(3)), want, atol=1e-14)


def test_identical_rows_have_zero_distance():
    x = np.array([[1.0, 2.0], [1.0, 2.0], [0.0, 0.0]])
    assert mahalanobis_distances(x, np.eye(2))[0, 1] == 0.0


def test_one_dimensional_projection():
    assert mahalanobis_distances([[0.0], [3.0]], [[2.0]])[0, 1] == 6.0


def test_distances_reject_non_finite():
    with pytest.raises(NumericalError):
        mahalanobis_distances([[np.inf], [0.0]], [[1.0]])


def test_distance_properties(rng):
    for _ in range(20):
        d, m = rng.integers(1, 5, size=2)
        m = min(m, d)
        x, w = rng.standard_normal((6, d)), rng.standard_normal((d, m))
        dist = mahalanobis_distances(x, w)
        assert np.array_equal(dist, dist.T)
        assert np.all(np.diag(dist) == 0) and np.all(dist >= 0)
        i, j, k = rng.choice(6, 3, replace=False)
        assert dist[i, k] <= dist[i, j] + dist[j, k] + 1e-9
        assert np.linalg.eigvalsh(w @ w.T).min() >= -1e-10


def test_gaussian_of_zero_is_one():
    np.testing.assert_array_equal(gaussian_similarity(np.zeros((3, 3)), 0.7), np.ones((3, 3)))


def test_gaussian_uses_unsquared_distance():
    sigma = 1.3
    assert gaussian_similarity(np.array([[2 * sigma**2]]), sigma)[0, 0] == pytest.approx(
        np.exp(-1.0), abs=1e-15)


def test_gaussian_symmetric(rng):
    dist = mahalanobis_distances(rng.standard_normal((6, 2)), np.eye(2))
    sim = gaussian_similarity(dist, 1.0)
    assert np.max(np.abs(sim - sim.T)) == 0.0


def test_gaussian_rejects_bad_sigma():
    with pytest.raises(ParameterError):
        gaussian_similarity(np.zeros((2, 2)), 0.0)


def test_threshold_zero_only_drops_diagonal():
    s = np.array([[1.0, 0.2], [0.2, 1.0]])
    np.testing.assert_array_equal(similarity_to_adjacency(s, 0.0), [[0, 0.2], [0.2, 0]])


def test_high_threshold_on_ones_keeps_complete_graph():
    np.testing.assert_array_equal(similarity_to_adjacency(np.ones((3, 3)), 1 - 1e-9),
                                  np.ones((3, 3)) - np.eye(3))


def test_threshold_above_max_isolates_nodes():
    s = np.array([[1.0, 0.3, 0.1], [0.3, 1.0, 0.2], [0.1, 0.2, 1.0]])
    np.testing.assert_array_equal(similarity_to_adjacency(s, 0.5), np.zeros((3, 3)))


def _sample(rng, n=5, d=3):
    x = rng.standard_normal((n, d))
    return x, normalized_laplacian(random_adjacency(rng, n, 0.5))


def test_full_mix_gives_learned_laplacian(rng):
    x, l_orig = _sample(rng)
    params = MetricParams(rng.standard_normal((3, 2)), 1.0, 1.0)
    np.testing.assert_allclose(evolved_laplacian(x, l_orig, params),
                               learned_laplacian(x, params), atol=1e-15)


def test_zero_residual_fixed_point(rng):
    x, _ = _sample(rng)
    params = MetricParams(np.eye(3))
    f = learned_laplacian(x, params)
    np.testing.assert_allclose(residual_laplacian(x, f, params), 0.0, atol=1e-15)
    np.testing.assert_allclose(evolved_laplacian(x, f, params), f, atol=1e-15)


def test_zero_mix_adds_both_laplacians(rng):
    x, l_orig = _sample(rng)
    w = rng.standard_normal((3, 3))
    sim = gaussian_similarity(mahalanobis_distances(x, w), 1.0)
    f = normalized_laplacian(similarity_to_adjacency(sim))
    np.testing.assert_allclose(evolved_laplacian(x, l_orig, MetricParams(w, mix_sigma=0.0)),
                               f + l_orig, atol=1e-14)


def test_evolved_laplacian_is_equivariant(rng):
    x, l_orig = _sample(rng, 6)
    params = MetricParams(rng.standard_normal((3, 3)), 0.8, 0.4, 0.05)
    p = permutation_matrix(rng.permutation(6))
    np.testing.assert_allclose(evolved_laplacian(p @ x, p @ l_orig @ p.T, params),
                               p @ evolved_laplacian(x, l_orig, params) @ p.T, atol=1e-10)


def test_metric_params_validation():
    with pytest.raises(ParameterError):
        MetricParams(np.eye(2), gaussian_sigma=0.0)
    with pytest.raises(ParameterError):
        MetricParams(np.eye(2), mix_sigma=1.5)
    with pytest.raises(ParameterError):
        MetricParams(np.eye(2), threshold=1.0)


def test_init_is_near_identity(rng):
    w = init_metric_weights(4, 3, rng)
    assert w.shape == (4, 3)
    assert np.max(np.abs(w - np.eye(4, 3))) < 1e-2


@pytest.mark.parametrize("mix, threshold", [(1.0, 0.0), (0.3, 0.0), (0.5, 0.2)])
def test_gradient_wrt_metric_weights(rng, mix, threshold):
    x, l_orig = _sample(rng, 5, 3)
    w = init_metric_weights(3, 2, rng, noise=0.3)
    probe = rng.standard_normal((5, 5))
    mask = np.ones((1, 5), dtype=bool)

    def loss(tape, w_t):
        lap, _ = evolved_laplacian_batch(tape.constant(x[None]), w_t, l_orig[None], mask,
                                         0.9, mix, threshold)
        return ad.reduce_sum(ad.sigmoid(lap * probe))

    sim = gaussian_similarity(mahalanobis_distances(x, w), 0.9)
    off = sim[~np.eye(5, dtype=bool)]
    assert np.min(np.abs(off - threshold)) > 1e-6
    tape = Tape()
    w_t = tape.variable(w)
    got = backward(tape, loss(tape, w_t)).wrt(w_t)
    fd = finite_difference(lambda v: float(loss(Tape(enabled=False),
                                                Tape(enabled=False).constant(v)).data), w)
    assert np.linalg.norm(got - fd) <= 1e-4 * np.linalg.norm(fd)
