"""Fast convolution/linear paths against brute-force loop oracles."""

import numpy as np
import pytest

from ganclass import tensor as T

from oracles import conv2d_loops, conv_transpose2d_loops, matmul_loops, relative_error

RTOL = 1e-6


def _random_conv_case(rng):
    n = int(rng.integers(1, 3))
    cin = int(rng.integers(1, 4))
    cout = int(rng.integers(1, 4))
    k = int(rng.integers(1, 4))
    stride = int(rng.integers(1, 3))
    padding = int(rng.integers(0, 2))
    h = int(rng.integers(max(k - 2 * padding, 1), 8))
    w = int(rng.integers(max(k - 2 * padding, 1), 8))
    x = rng.standard_normal((n, cin, h, w)).astype(np.float32)
    kern = rng.standard_normal((cout, cin, k, k)).astype(np.float32)
    bias = rng.standard_normal(cout).astype(np.float32)
    return x, kern, bias, stride, padding


def test_conv2d_matches_loop_oracle_on_random_shapes():
    rng = np.random.default_rng(101)
    for _ in range(100):
        x, kern, bias, stride, padding = _random_conv_case(rng)
        fast = T.conv2d(T.Tensor(x), T.Tensor(kern), T.Tensor(bias),
                        stride=stride, padding=padding).data
        slow = conv2d_loops(x, kern, bias, stride=stride, padding=padding)
        assert relative_error(fast, slow) < RTOL


def test_conv_transpose2d_matches_loop_oracle_on_random_shapes():
    rng = np.random.default_rng(202)
    for _ in range(100):
        n = int(rng.integers(1, 3))
        cin = int(rng.integers(1, 4))
        cout = int(rng.integers(1, 4))
        k = int(rng.integers(1, 5))
        stride = int(rng.integers(1, 3))
        padding = int(rng.integers(0, (k - 1) // 2 + 1))
        h = int(rng.integers(1, 6))
        w = int(rng.integers(1, 6))
        if (h - 1) * stride - 2 * padding + k < 1:
            continue
        x = rng.standard_normal((n, cin, h, w)).astype(np.float32)
        kern = rng.standard_normal((cin, cout, k, k)).astype(np.float32)
        bias = rng.standard_normal(cout).astype(np.float32)
        fast = T.conv_transpose2d(T.Tensor(x), T.Tensor(kern), T.Tensor(bias),
                                  stride=stride, padding=padding).data
        slow = conv_transpose2d_loops(x, kern, bias, stride=stride, padding=padding)
        assert relative_error(fast, slow) < RTOL


def test_linear_matches_loop_oracle_on_random_shapes():
    rng = np.random.default_rng(303)
    for _ in range(100):
        n, fin, fout = (int(v) for v in rng.integers(1, 7, size=3))
        x = rng.standard_normal((n, fin)).astype(np.float32)
        w = rng.standard_normal((fin, fout)).astype(np.float32)
        b = rng.standard_normal(fout).astype(np.float32)
        fast = T.linear(T.Tensor(x), T.Tensor(w), T.Tensor(b)).data
        slow = matmul_loops(x, w) + b
        assert relative_error(fast, slow) < RTOL


def test_random_2x3x8x8_case_from_the_contract():
    rng = np.random.default_rng(404)
    x = rng.standard_normal((2, 3, 8, 8)).astype(np.float32)
    kern = rng.standard_normal((4, 3, 3, 3)).astype(np.float32)
    bias = rng.standard_normal(4).astype(np.float32)
    fast = T.conv2d(T.Tensor(x), T.Tensor(kern), T.Tensor(bias)).data
    slow = conv2d_loops(x, kern, bias)
    assert relative_error(fast, slow) < RTOL


@pytest.mark.parametrize("h,k,stride,padding", [(5, 3, 2, 1), (6, 4, 2, 1), (4, 4, 1, 0)])
def test_adjoint_duality_on_matched_shapes(h, k, stride, padding):
    """conv_transpose2d forward == conv2d input gradient, same kernel array."""
    if (h + 2 * padding - k) % stride != 0:
        pytest.skip("shape pair does not invert exactly")
    rng = np.random.default_rng(h * 100 + k)
    cin, cout, n = 3, 2, 2
    x = T.Tensor(rng.standard_normal((n, cin, h, h)), requires_grad=True, dtype=np.float64)
    kern = T.Tensor(rng.standard_normal((cout, cin, k, k)), dtype=np.float64)
    ho = (h + 2 * padding - k) // stride + 1
    upstream = rng.standard_normal((n, cout, ho, ho))
    with T.GradTape():
        y = T.conv2d(x, kern, T.Tensor(np.zeros(cout), dtype=np.float64),
                     stride=stride, padding=padding)
        loss = T.sum_all(T.mul(y, T.Tensor(upstream, dtype=np.float64)))
    loss.backward()
    adj = T.conv_transpose2d(T.Tensor(upstream, dtype=np.float64), kern,
                             T.Tensor(np.zeros(cin), dtype=np.float64),
                             stride=stride, padding=padding)
    assert relative_error(adj.data, x.grad) < 1e-12
