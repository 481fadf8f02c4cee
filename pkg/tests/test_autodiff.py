import zlib

import numpy as np
import pytest

from egcn import autodiff as ad
from egcn.autodiff import ParamStore, Tape, backward, finite_difference
from egcn.errors import NumericalError, StructuralError


def _grad_of(fn, *arrays):
    tape = Tape()
    leaves = [tape.variable(a) for a in arrays]
    out = fn(*leaves)
    grads = backward(tape, out)
    return [grads.wrt(v) for v in leaves]


def test_matmul_identity():
    tape = Tape()
    a = tape.variable([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal((a @ np.eye(2)).data, [[1, 2], [3, 4]])


def test_relu_backward_subgradient():
    tape = Tape()
    x = tape.variable([-1.0, 2.0])
    y = ad.relu(x)
    loss = ad.reduce_sum(y * np.array([5.0, 5.0]))
    np.testing.assert_array_equal(backward(tape, loss).wrt(x), [0.0, 5.0])


def test_sqrt_backward_at_four():
    (g,) = _grad_of(lambda x: ad.reduce_sum(ad.sqrt(x)), np.array([4.0]))
    assert g[0] == 0.25


def test_sqrt_zero_has_zero_gradient():
    (g,) = _grad_of(lambda x: ad.reduce_sum(ad.sqrt(x)), np.array([0.0, 1.0]))
    np.testing.assert_array_equal(g, [0.0, 0.5])


def test_sum_gradient_is_ones():
    (g,) = _grad_of(lambda x: ad.reduce_sum(x), np.arange(6.0).reshape(2, 3))
    np.testing.assert_array_equal(g, np.ones((2, 3)))


def test_quadratic_form_matches_analytic():
    rng = np.random.default_rng(0)
    w = rng.standard_normal((3, 4))
    x = rng.standard_normal((4, 1))
    tape = Tape()
    wt = tape.variable(w)
    y = wt @ x
    g = backward(tape, ad.reduce_sum(y * y)).wrt(wt)
    np.testing.assert_allclose(g, 2 * w @ x @ x.T, atol=1e-12, rtol=0)


def test_loss_must_be_scalar():
    tape = Tape()
    x = tape.variable(np.ones(3))
    with pytest.raises(StructuralError):
        backward(tape, x * 2.0)


def test_shape_mismatch_names_both_shapes():
    tape = Tape()
    with pytest.raises(StructuralError, match=r"\(2, 3\).*\(2, 3\)"):
        tape.variable(np.ones((2, 3))) @ tape.variable(np.ones((2, 3)))


def test_non_finite_trips_numerical_error():
    tape = Tape()
    x = tape.variable([1000.0])
    with pytest.raises(NumericalError):
        ad.exp(x)


def test_max_over_set_ties_route_to_lowest_index():
    tape = Tape()
    x = tape.variable([[[2.0], [2.0], [1.0]]])
    member = np.ones((1, 3, 3), dtype=bool)
    out = ad.max_over_set(x, member)
    g = backward(tape, ad.reduce_sum(out)).wrt(x)
    np.testing.assert_array_equal(g[0, :, 0], [3.0, 0.0, 0.0])


def test_backward_is_additive():
    rng = np.random.default_rng(1)
    w = rng.standard_normal((3, 3))

    def run(which):
        tape = Tape()
        store = ParamStore()
        store.add("w", w)
        wt = tape.param(store, "w")
        l1 = ad.reduce_sum(ad.exp(wt * 0.1))
        l2 = ad.reduce_sum(ad.relu(wt @ wt))
        loss = {"1": l1, "2": l2, "both": l1 + l2}[which]
        backward(tape, loss, store)
        return store.grads["w"]

    np.testing.assert_array_equal(run("both"), run("1") + run("2"))


def test_backward_deterministic():
    rng = np.random.default_rng(2)
    a = rng.standard_normal((4, 4))
    f = lambda x: ad.reduce_sum(ad.sigmoid(x @ x) * ad.softplus(x))  # noqa: E731
    g1, = _grad_of(f, a)
    g2, = _grad_of(f, a)
    assert np.array_equal(g1, g2)


def test_param_store_rejects_duplicates():
    store = ParamStore()
    store.add("w", np.zeros(2))
    with pytest.raises(StructuralError):
        store.add("w", np.zeros(2))


def test_disabled_tape_records_nothing():
    tape = Tape(enabled=False)
    x = tape.variable(np.ones(3))
    ad.reduce_sum(ad.exp(x))
    assert len(tape) == 0


# --- every primitive's VJP against finite differences at 20 random points ---

def _positive(rng, shape):
    return rng.uniform(0.5, 2.0, shape)


PRIMITIVES = {
    "matmul": (lambda a, b: a @ b, [(3, 4), (4, 2)], None),
    "add": (lambda a, b: a + b, [(3, 4), (4,)], None),
    "sub": (lambda a, b: a - b, [(3, 1), (3, 4)], None),
    "scalar_mul": (lambda a: ad.scalar_mul(a, -1.7), [(3, 4)], None),
    "elementwise_mul": (lambda a, b: a * b, [(2, 3, 4), (3, 1)], None),
    "divide": (lambda a, b: ad.divide(a, b), [(3, 4), (3, 4)], "positive_b"),
    "transpose": (lambda a: ad.transpose(a) @ np.arange(3.0).reshape(3, 1), [(3, 4)], None),
    "relu": (ad.relu, [(3, 4)], "away_from_zero"),
    "exp": (ad.exp, [(3, 4)], None),
    "sqrt": (ad.sqrt, [(3, 4)], "positive"),
    "rsqrt": (ad.rsqrt, [(3, 4)], "positive"),
    "sigmoid": (ad.sigmoid, [(3, 4)], None),
    "softplus": (ad.softplus, [(3, 4)], None),
    "sum_rows": (ad.sum_rows, [(3, 4)], None),
    "reduce_sum_axes": (lambda a: ad.reduce_sum(a, axis=(0, 1)), [(2, 3, 4)], None),
    "reshape": (lambda a: ad.reshape(a, (4, 3)) @ np.ones((3, 2)), [(3, 4)], None),
    "slice": (lambda a: a[1:, ::2], [(3, 4)], None),
    "pad": (lambda a: ad.pad(a, ((1, 2), (0, 1))), [(3, 4)], None),
    "concat": (lambda a, b: ad.concat([a, b], axis=-1), [(3, 2), (3, 1)], None),
    "max_over_set": (lambda a: ad.max_over_set(a, np.array(
        [[1, 1, 0, 0], [0, 1, 1, 0], [1, 0, 1, 1], [0, 0, 0, 1]], dtype=bool)),
        [(4, 3)], None),
    "top_eigenvalue": (lambda a: ad.top_eigenvalue(a + ad.transpose(a)), [(2, 4, 4)], None),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_vjp_matches_finite_differences(name):
    fn, shapes, cond = PRIMITIVES[name]
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    for _ in range(20):
        arrays = [rng.standard_normal(s) for s in shapes]
        if cond in ("positive",):
            arrays = [_positive(rng, s) for s in shapes]
        if cond == "positive_b":
            arrays[1] = _positive(rng, shapes[1])
        if cond == "away_from_zero":
            arrays = [np.where(np.abs(a) < 0.05, 0.5, a) for a in arrays]
        weights = None

        def scalar(*xs):
            nonlocal weights
            out = fn(*xs)
            if weights is None:
                weights = np.random.default_rng(7).standard_normal(out.shape)
            return ad.reduce_sum(out * weights)

        tape = Tape()
        leaves = [tape.variable(a) for a in arrays]
        loss = scalar(*leaves)
        grads = backward(tape, loss)
        for i, leaf in enumerate(leaves):
            def f(v, i=i):
                args = [Tensor_(a) for a in arrays]
                args[i] = Tensor_(v)
                return float(scalar(*args).data)
            fd = finite_difference(f, arrays[i])
            np.testing.assert_allclose(grads.wrt(leaf), fd, rtol=1e-6, atol=1e-7,
                                       err_msg=f"{name} input {i}")


def Tensor_(a):
    return ad.Tensor(a, Tape(enabled=False))
