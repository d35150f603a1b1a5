import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from saliency_lab import tensor as T


def naive_conv(x, k, b, stride, pad):
    # sliding-window oracle, written independently of the tensordot kernel
    B, C, H, W = x.shape
    O, _, kh, kw = k.shape
    xp = np.zeros((B, C, H + 2 * pad, W + 2 * pad))
    xp[:, :, pad:pad + H, pad:pad + W] = x
    ho = (H + 2 * pad - kh) // stride + 1
    wo = (W + 2 * pad - kw) // stride + 1
    out = np.zeros((B, O, ho, wo))
    for n in range(B):
        for o in range(O):
            for i in range(ho):
                for j in range(wo):
                    patch = xp[n, :, i * stride:i * stride + kh, j * stride:j * stride + kw]
                    out[n, o, i, j] = (patch * k[o]).sum() + b[o]
    return out


def test_conv_zero_input_gives_zero():
    rng = np.random.default_rng(0)
    out = T.conv2d(np.zeros((1, 1, 3, 3)), rng.normal(size=(1, 1, 3, 3)), np.zeros(1), 1, 1)
    assert np.all(out == 0)


def test_conv_ones_center_and_corners():
    out = T.conv2d(np.ones((1, 1, 3, 3)), np.ones((1, 1, 3, 3)), np.zeros(1), 1, 1)
    assert out.shape == (1, 1, 3, 3)
    assert out[0, 0, 1, 1] == 9.0
    assert out[0, 0, 0, 0] == out[0, 0, 0, 2] == out[0, 0, 2, 0] == out[0, 0, 2, 2] == 4.0


def test_conv_scalar_kernel():
    out = T.conv2d(np.array([[[[1.0, 2], [3, 4]]]]), np.array([[[[2.0]]]]), np.zeros(1), 1, 0)
    np.testing.assert_array_equal(out[0, 0], [[2, 4], [6, 8]])


@pytest.mark.parametrize("stride,pad,k", [(1, 0, 3), (1, 1, 3), (2, 0, 3), (2, 1, 3), (1, 0, 1), (1, 1, 1)])
def test_conv_matches_sliding_window_oracle(stride, pad, k):
    rng = np.random.default_rng(stride * 10 + pad)
    x = rng.normal(size=(2, 3, 7, 6))
    w = rng.normal(size=(4, 3, k, k))
    b = rng.normal(size=4)
    np.testing.assert_allclose(T.conv2d(x, w, b, stride, pad), naive_conv(x, w, b, stride, pad), rtol=1e-12, atol=1e-12)


def test_conv_output_size_formula():
    out = T.conv2d(np.zeros((1, 2, 9, 8)), np.zeros((5, 2, 3, 3)), np.zeros(5), 2, 1)
    assert out.shape == (1, 5, (9 + 2 - 3) // 2 + 1, (8 + 2 - 3) // 2 + 1)


def test_conv_errors():
    with pytest.raises(ValueError, match="channels"):
        T.conv2d(np.zeros((1, 2, 4, 4)), np.zeros((1, 3, 3, 3)), np.zeros(1))
    with pytest.raises(ValueError, match="non-positive"):
        T.conv2d(np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 3, 3)), np.zeros(1), 1, 0)


@settings(max_examples=30, deadline=None)
@given(
    arrays(np.float64, (2, 2, 5, 4), elements=st.floats(-10, 10)),
    arrays(np.float64, (2, 2, 5, 4), elements=st.floats(-10, 10)),
    st.floats(-3, 3),
    st.floats(-3, 3),
)
def test_conv_is_linear(x, y, a, b):
    k = np.random.default_rng(1).normal(size=(3, 2, 3, 3))
    zero = np.zeros(3)
    lhs = T.conv2d(a * x + b * y, k, zero, 1, 1)
    rhs = a * T.conv2d(x, k, zero, 1, 1) + b * T.conv2d(y, k, zero, 1, 1)
    scale = max(1.0, np.abs(lhs).max(), np.abs(rhs).max())
    assert np.abs(lhs - rhs).max() <= 1e-12 * scale


def test_conv_one_hot_selects_channel():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(2, 4, 3, 5))
    k = np.zeros((2, 4, 1, 1))
    k[0, 2] = 1.0
    k[1, 0] = 1.0
    out = T.conv2d(x, k, np.zeros(2))
    np.testing.assert_array_equal(out[:, 0], x[:, 2])
    np.testing.assert_array_equal(out[:, 1], x[:, 0])


def test_maxpool_examples():
    out, idx = T.maxpool2(np.array([[[[1.0, 2], [3, 4]]]]))
    assert out.shape == (1, 1, 1, 1) and out[0, 0, 0, 0] == 4
    assert idx[0, 0, 0, 0] == 3  # row 1, col 1
    const, _ = T.maxpool2(np.full((1, 2, 4, 6), 0.3))
    assert const.shape == (1, 2, 2, 3) and np.all(const == 0.3)


def test_maxpool_grid():
    x = np.arange(1, 17, dtype=float).reshape(1, 1, 4, 4)
    # exhaustive window max oracle
    expected = [[max(x[0, 0, 2 * i + a, 2 * j + b] for a in (0, 1) for b in (0, 1)) for j in range(2)] for i in range(2)]
    assert expected == [[6, 8], [14, 16]]
    np.testing.assert_array_equal(T.maxpool2(x)[0][0, 0], expected)


def test_maxpool_ties_pick_first():
    _, idx = T.maxpool2(np.ones((1, 1, 2, 2)))
    assert idx[0, 0, 0, 0] == 0


def test_maxpool_odd_rejected():
    with pytest.raises(ValueError, match="even"):
        T.maxpool2(np.zeros((1, 1, 3, 4)))


def test_upsample_example():
    out = T.upsample2(np.array([[[[1.0, 2], [3, 4]]]]))
    np.testing.assert_array_equal(
        out[0, 0], [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]]
    )
    c = T.upsample2(np.full((2, 1, 3, 2), 7.0))
    assert c.shape == (2, 1, 6, 4) and np.all(c == 7)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 2), st.integers(1, 3), st.integers(1, 4), st.integers(1, 4)),
              elements=st.floats(-1e6, 1e6)))
def test_maxpool_inverts_upsample(x):
    np.testing.assert_array_equal(T.maxpool2(T.upsample2(x))[0], x)


def test_dense_examples():
    x = np.array([[1.0, 2.0]])
    np.testing.assert_array_equal(T.dense(x, np.eye(2), np.zeros(2)), x)
    np.testing.assert_array_equal(T.dense(np.ones((3, 2)), np.zeros((2, 2)), np.array([5.0, -1])), [[5, -1]] * 3)
    np.testing.assert_array_equal(T.dense(x, np.array([[1.0, 1], [0, 1]]), np.zeros(2)), [[3, 2]])
    with pytest.raises(ValueError, match="inner"):
        T.dense(np.ones((1, 3)), np.eye(2), np.zeros(2))


def test_activations():
    assert T.activate(np.array([-1.0]), "relu")[0] == 0
    assert T.activate(np.array([2.0]), "relu")[0] == 2
    assert T.activate(np.array([0.0]), "sigmoid")[0] == 0.5
    assert T.activate(np.array([0.0]), "tanh")[0] == 0
    s = T.activate(np.array([-800.0, -40.0, 40.0, 800.0]), "sigmoid")
    assert np.all((s > 0) & (s < 1))
    with pytest.raises(ValueError):
        T.activate(np.zeros(1), "softplus")


def test_avgpool_block_mean():
    np.testing.assert_array_equal(T.avgpool(np.array([[1.0, 0], [0, 1]]), 2), [[0.5]])


@pytest.mark.parametrize("op", [
    lambda x: T.conv2d(x, np.random.default_rng(3).normal(size=(2, 3, 3, 3)), np.ones(2), 1, 1),
    lambda x: T.maxpool2(x)[0],
    T.upsample2,
    lambda x: T.activate(x, "tanh"),
])
def test_batch_split_invariance(op):
    rng = np.random.default_rng(4)
    a, b = rng.normal(size=(2, 3, 4, 6)), rng.normal(size=(3, 3, 4, 6))
    np.testing.assert_allclose(op(np.concatenate([a, b])), np.concatenate([op(a), op(b)]), rtol=1e-12, atol=1e-12)
