import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emoattn import tensor_core as tc
from gradcases import KERNEL_CASES, check_case


def test_matmul_identity():
    B = np.arange(6.0).reshape(2, 3)
    out, _ = tc.matmul(np.eye(2), B)
    assert np.array_equal(out, B)


def test_matmul_hand():
    out, _ = tc.matmul(np.array([[1.0, 2], [3, 4]]), np.array([[1.0], [1]]))
    assert out.tolist() == [[3.0], [7.0]]


def test_matmul_shape_error_names_shapes():
    with pytest.raises(tc.ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        tc.matmul(np.zeros((2, 3)), np.zeros((2, 3)))


@pytest.mark.parametrize("row, mask, expected", [
    ([0.0, 0.0], [1, 1], [0.5, 0.5]),
    ([math.log(2), 0.0], [1, 1], [2 / 3, 1 / 3]),
    ([5.0, 9.0], [1, 0], [1.0, 0.0]),
])
def test_softmax_examples(row, mask, expected):
    P, _ = tc.softmax_rows(np.array([row]), np.array(mask))
    assert P[0] == pytest.approx(expected, abs=1e-15)


def test_softmax_all_masked():
    with pytest.raises(ValueError):
        tc.softmax_rows(np.zeros((1, 3)), np.zeros(3))


def test_softmax_stable_for_large_scores():
    P, _ = tc.softmax_rows(np.array([[1000.0, 0.0, -1000.0]]), np.ones(3))
    assert np.all(np.isfinite(P)) and P[0, 0] == pytest.approx(1.0)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_softmax_normalised_and_masked(seed):
    rng = np.random.default_rng(seed)
    S = rng.normal(scale=10, size=(4, 7))
    mask = rng.random(7) < 0.6
    mask[0] = True
    P, _ = tc.softmax_rows(S, mask)
    assert np.all(P >= 0)
    assert np.all(P[:, ~mask] == 0)
    assert np.all(np.abs(P.sum(axis=1) - 1) <= 1e-12)


def test_attention_single_token_returns_v():
    rng = np.random.default_rng(0)
    Q, K, V = (rng.normal(size=(1, 4)) for _ in range(3))
    out, _ = tc.scaled_dot_attention(Q, K, V, np.ones(1))
    assert np.array_equal(out, V)


def test_attention_scales_by_full_model_width():
    rng = np.random.default_rng(1)
    Q, K, V = (rng.normal(size=(3, 15)) for _ in range(3))
    out, _ = tc.scaled_dot_attention(Q, K, V, np.ones(3), scale_dim=30)
    S = Q @ K.T / math.sqrt(30)
    P = np.exp(S - S.max(1, keepdims=True))
    P /= P.sum(1, keepdims=True)
    assert np.allclose(out, P @ V, atol=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_attention_permutation_equivariant(seed):
    rng = np.random.default_rng(seed)
    n = 5
    Q, K, V = (rng.normal(size=(n, 4)) for _ in range(3))
    mask = rng.random(n) < 0.7
    mask[0] = True
    perm = rng.permutation(n)
    out, _ = tc.scaled_dot_attention(Q, K, V, mask)
    out_p, _ = tc.scaled_dot_attention(Q[perm], K[perm], V[perm], mask[perm])
    assert np.allclose(out_p, out[perm], atol=1e-12)


def test_attention_masked_keys_get_no_weight():
    rng = np.random.default_rng(2)
    Q, K, V = (rng.normal(size=(3, 4)) for _ in range(3))
    mask = np.array([1, 1, 0])
    V2 = V.copy()
    V2[2] = 1e6
    a, _ = tc.scaled_dot_attention(Q, K, V, mask)
    b, _ = tc.scaled_dot_attention(Q, K, V2, mask)
    assert np.allclose(a, b, atol=1e-12)


def test_layer_norm_constant_row():
    out, _ = tc.layer_norm(np.full((1, 4), 3.0), np.ones(4), np.zeros(4))
    assert np.all(out == 0)


def test_layer_norm_unit_row():
    out, _ = tc.layer_norm(np.array([[1.0, -1.0]]), np.ones(2), np.zeros(2), eps=1e-300)
    assert out[0] == pytest.approx([1.0, -1.0], abs=1e-15)


def test_layer_norm_moments():
    X = np.random.default_rng(3).normal(size=(3, 8)) * 4 + 2
    out, _ = tc.layer_norm(X, np.ones(8), np.zeros(8))
    assert np.all(np.abs(out.mean(axis=1)) <= 1e-10)
    assert np.all(np.abs(out.var(axis=1) - 1) <= 1e-6)


def test_ffn_dead_relu_gives_b2():
    X = np.ones((2, 3))
    W1 = -np.ones((3, 4))
    b2 = np.array([0.5, -1.0, 2.0])
    out, _ = tc.ffn(X, W1, np.zeros(4), np.ones((4, 3)), b2)
    assert np.array_equal(out, np.tile(b2, (2, 1)))


def test_ffn_identity_path():
    X = np.abs(np.random.default_rng(4).normal(size=(3, 4)))
    out, _ = tc.ffn(X, np.eye(4), np.zeros(4), np.eye(4), np.zeros(4))
    assert np.array_equal(out, X)


def test_ffn_shape_error():
    with pytest.raises(tc.ShapeError):
        tc.ffn(np.ones((2, 3)), np.ones((4, 5)), np.zeros(5), np.ones((5, 3)), np.zeros(3))


def test_conv_output_length():
    out, _ = tc.conv1d_valid(np.zeros((5, 2)), np.zeros((3, 2, 4)), np.zeros(4))
    assert out.shape == (3, 4)


def test_conv_all_ones():
    out, _ = tc.conv1d_valid(np.ones((5, 2)), np.ones((3, 2, 1)), np.zeros(1))
    assert np.all(out == 6)


def test_conv_too_short():
    with pytest.raises(tc.ShapeError):
        tc.conv1d_valid(np.ones((2, 2)), np.ones((3, 2, 1)), np.zeros(1))


@given(st.integers(1, 12), st.integers(1, 12))
def test_conv_shape_law(n, k):
    if n < k:
        return
    out, _ = tc.conv1d_valid(np.ones((n, 2)), np.ones((k, 2, 3)), np.zeros(3))
    assert out.shape == (n - k + 1, 3)


def test_conv_matches_direct_loop():
    rng = np.random.default_rng(5)
    X, F, b = rng.normal(size=(7, 3)), rng.normal(size=(2, 3, 4)), rng.normal(size=4)
    out, _ = tc.conv1d_valid(X, F, b)
    direct = np.array([[max(0.0, np.sum(X[t:t + 2] * F[:, :, j]) + b[j]) for j in range(4)] for t in range(6)])
    assert np.allclose(out, direct, atol=1e-12)


def test_max_over_time_examples():
    assert tc.max_over_time(np.array([[1.0, 2.0]]))[0].tolist() == [1.0, 2.0]
    assert tc.max_over_time(np.array([[1.0, 5.0], [3.0, 2.0]]))[0].tolist() == [3.0, 5.0]


def test_max_over_time_routes_to_first_argmax():
    X = np.array([[2.0, 0.0], [2.0, 1.0]])
    out, cache = tc.max_over_time(X)
    dX = tc.max_over_time_backward(np.ones(2), cache)
    assert dX.tolist() == [[1.0, 0.0], [0.0, 1.0]]


def test_max_over_time_empty():
    with pytest.raises(tc.ShapeError):
        tc.max_over_time(np.zeros((0, 3)))


def test_dropout_eval_and_zero_p_are_identity():
    X = np.random.default_rng(6).normal(size=(4, 4))
    assert tc.dropout(X, 0.5, np.random.default_rng(0), training=False)[0] is X
    assert tc.dropout(X, 0.0, np.random.default_rng(0), training=True)[0] is X


def test_dropout_statistics():
    X = np.ones((400, 500))
    out, _ = tc.dropout(X, 0.1, np.random.default_rng(123), training=True)
    survivors = np.mean(out != 0)
    assert abs(survivors - 0.9) <= 0.01
    assert abs(out.mean() - 1.0) <= 0.02


def test_dropout_rejects_bad_p():
    with pytest.raises(ValueError):
        tc.dropout(np.ones(3), 1.0, np.random.default_rng(0), True)


def test_bce_examples():
    loss, _ = tc.bce_sum_loss(np.zeros((1, 1)), np.ones((1, 1)))
    assert loss == pytest.approx(math.log(2))
    loss, grad = tc.bce_sum_loss(np.full((1, 1), 100.0), np.ones((1, 1)))
    assert 0 <= loss < 1e-40 and np.isfinite(grad).all()
    loss, _ = tc.bce_sum_loss(np.full((1, 1), -800.0), np.ones((1, 1)))
    assert loss == pytest.approx(800.0)


def test_bce_gradient_identity():
    rng = np.random.default_rng(7)
    z, y = rng.normal(size=(4, 11)), rng.integers(0, 2, size=(4, 11))
    _, g = tc.bce_sum_loss(z, y)
    assert np.allclose(g, (1 / (1 + np.exp(-z)) - y) / 4, atol=1e-15)


def test_sigmoid_extremes():
    s = tc.sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    assert s.tolist() == [0.0, 0.5, 1.0]


def test_kernels_do_not_mutate_inputs():
    rng = np.random.default_rng(8)
    for name, build in KERNEL_CASES.items():
        built = build(rng)
        inputs, fwd = built[0], built[1]
        if fwd is None:
            continue
        before = [x.copy() for x in inputs]
        fwd(*inputs)
        assert all(np.array_equal(a, b) for a, b in zip(inputs, before)), name


def test_check_finite():
    with pytest.raises(tc.NonFiniteError):
        tc.check_finite(np.array([1.0, np.nan]), "x")


@pytest.mark.parametrize("name", sorted(KERNEL_CASES))
@pytest.mark.parametrize("seed", range(3))
def test_kernel_gradients(name, seed):
    assert check_case(name, np.random.default_rng(seed)) <= 1e-6
