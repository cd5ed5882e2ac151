import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from hfgpi import autodiff as ad
from hfgpi.errors import ContractError, DimensionError, InputError

from conftest import check_grads, param


def triple_loop(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            for k in range(a.shape[1]):
                out[i, j] += a[i, k] * b[k, j]
    return out


def test_matmul_hand_case():
    out = ad.matmul(ad.constant([[1, 2], [3, 4]]), ad.constant([[5], [6]]))
    np.testing.assert_array_equal(out.value, [[17], [39]])


def test_matmul_identity_and_zero(rng):
    b = rng.normal(size=(2, 3))
    np.testing.assert_array_equal(ad.matmul(np.eye(2), b).value, b)
    np.testing.assert_array_equal(ad.matmul(np.zeros((2, 2)), b).value, np.zeros((2, 3)))


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        ad.matmul(np.ones((2, 3)), np.ones((2, 3)))


small = st.integers(1, 5)


@settings(max_examples=50, deadline=None)
@given(st.data())
def test_matmul_matches_triple_loop(data):
    n, k, m = data.draw(small), data.draw(small), data.draw(small)
    elems = st.floats(-10, 10, allow_nan=False)
    a = data.draw(arrays(np.float64, (n, k), elements=elems))
    b = data.draw(arrays(np.float64, (k, m), elements=elems))
    np.testing.assert_allclose(ad.matmul(a, b).value, triple_loop(a, b), rtol=1e-12, atol=1e-9)


def test_row_softmax_examples():
    np.testing.assert_allclose(ad.row_softmax(ad.constant([[0.0, math.log(3.0)]])).value,
                               [[0.25, 0.75]], atol=1e-15)
    np.testing.assert_allclose(ad.row_softmax(ad.constant(np.full((2, 4), 7.0))).value, 0.25)


@settings(max_examples=50, deadline=None)
@given(st.floats(-50, 50), st.floats(-20, 20))
def test_row_softmax_shift_invariance(z, c):
    a = ad.row_softmax(ad.constant([[z, z + c]])).value
    b = ad.row_softmax(ad.constant([[0.0, c]])).value
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_row_softmax_stable_for_large_logits():
    out = ad.row_softmax(ad.constant([[1000.0, 0.0]])).value
    assert np.all(np.isfinite(out)) and out[0, 0] == 1.0


def test_grad_of_sum_of_squares():
    x = ad.parameter([[3.0]])
    (g,) = ad.grad(ad.sum_all(x * x), [x])
    assert g[0, 0] == 6.0


def test_grad_of_unreached_param_is_zero(rng):
    x, p = param(rng, 2, 2), param(rng, 3, 1)
    gx, gp = ad.grad(ad.sum_all(x), [x, p])
    np.testing.assert_array_equal(gp, np.zeros((3, 1)))
    np.testing.assert_array_equal(gx, np.ones((2, 2)))


def test_non_scalar_loss_is_a_contract_violation(rng):
    x = param(rng, 2, 2)
    with pytest.raises(ContractError):
        ad.grad(x, [x])


def test_reverse_accumulate_alias():
    assert ad.reverse_accumulate is ad.grad


def test_shared_subexpression_accumulates(rng):
    x = param(rng, 2, 2)
    y = x @ x
    (g,) = ad.grad(ad.sum_all(y + y), [x])
    ones = np.ones((2, 2))
    np.testing.assert_allclose(g, 2 * (ones @ x.value.T + x.value.T @ ones))


def test_matmul_chain_gradcheck(rng):
    a, b, c = param(rng, 3, 4), param(rng, 4, 2), param(rng, 2, 3)
    check_grads(lambda: ad.frobenius_sq(a @ b @ c), [a, b, c], 1e-6)


def test_row_softmax_gradcheck(rng):
    a, w = param(rng, 3, 5), param(rng, 5, 2)
    check_grads(lambda: ad.sum_all(ad.row_softmax(a) @ w * (ad.row_softmax(a) @ w)), [a, w], 1e-6)


UNARY = {
    "sigmoid": ad.sigmoid,
    "tanh": ad.tanh,
    "exp": ad.exp,
    "relu": ad.relu,
    "sqrt_of_positive": lambda t: ad.sqrt(ad.exp(t)),
    "log_of_positive": lambda t: ad.log(ad.exp(t) + 1.0),
    "clip_interior": lambda t: ad.clip(t, -100.0, 100.0),
    "transpose": ad.transpose,
    "sum_rows": ad.sum_rows,
    "sum_cols": ad.sum_cols,
    "mean_all": ad.mean_all,
    "neg": lambda t: -t,
    "scale": lambda t: ad.scale(t, 2.5),
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_op_gradients(name, rng):
    x = ad.parameter(rng.normal(size=(3, 4)) + 0.05)  # keep relu away from its kink
    w = ad.constant(rng.normal(size=UNARY[name](x).shape))
    check_grads(lambda: ad.sum_all(UNARY[name](x) * w), [x], 1e-6)


def test_binary_broadcast_gradients(rng):
    a, row, col = param(rng, 3, 4), param(rng, 1, 4), param(rng, 3, 1)
    w = ad.constant(rng.normal(size=(3, 4)))
    check_grads(lambda: ad.sum_all((a * row - col + a) * w), [a, row, col], 1e-6)


def test_structured_op_gradients(rng):
    a, b = param(rng, 3, 4), param(rng, 5, 4)
    gamma, beta = param(rng, 1, 4), param(rng, 1, 4)
    w = ad.constant(rng.normal(size=(3, 5)))
    check_grads(lambda: ad.sum_all(ad.cosine_similarity(a, b) * w), [a, b], 1e-6)
    check_grads(lambda: ad.frobenius_sq(ad.layer_norm(a, gamma, beta) - 0.3), [a, gamma, beta], 1e-6)
    check_grads(lambda: ad.frobenius_norm(ad.concat_cols([ad.slice_cols(a, 1, 3), a @ b.T])),
                [a, b], 1e-6)


def test_relu_subgradient_at_zero_is_zero():
    x = ad.parameter([[0.0, 1.0, -1.0]])
    (g,) = ad.grad(ad.sum_all(ad.relu(x)), [x])
    np.testing.assert_array_equal(g, [[0.0, 1.0, 0.0]])


def test_log_rejects_non_positive():
    with pytest.raises(InputError):
        ad.log(ad.constant([[0.0]]))


def test_cosine_rejects_zero_rows():
    with pytest.raises(InputError, match="row 1"):
        ad.cosine_similarity(ad.constant([[1.0, 0.0], [0.0, 0.0]]), ad.constant([[1.0, 1.0]]))


def test_non_finite_input_rejected():
    with pytest.raises(InputError):
        ad.constant([[np.nan]])


def test_deep_chain_does_not_recurse():
    x = ad.parameter([[1.0]])
    y = x
    for _ in range(5000):
        y = y * 1.0
    (g,) = ad.grad(y, [x])
    assert g[0, 0] == 1.0
