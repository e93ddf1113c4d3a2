"""Forward-value examples, error surfaces, and backward bookkeeping of the
tensor core."""

import numpy as np
import pytest

from ganclass import tensor as T

from oracles import batchnorm_train_oracle, relative_error


def t(data, **kw):
    return T.Tensor(np.asarray(data, dtype=np.float32), **kw)


class TestConv2d:
    def test_all_ones_sums_window(self):
        out = T.conv2d(t(np.ones((1, 1, 3, 3))), t(np.ones((1, 1, 2, 2))), t(np.zeros(1)))
        assert out.shape == (1, 1, 2, 2)
        np.testing.assert_array_equal(out.data, np.full((1, 1, 2, 2), 4.0, np.float32))

    def test_1x1_identity_kernel(self):
        rng = np.random.default_rng(0)
        x = t(rng.standard_normal((2, 1, 5, 5)))
        out = T.conv2d(x, t(np.ones((1, 1, 1, 1))), t(np.zeros(1)))
        np.testing.assert_array_equal(out.data, x.data)

    def test_output_shape_formula(self):
        out = T.conv2d(t(np.zeros((1, 2, 9, 7))), t(np.zeros((3, 2, 3, 3))),
                       t(np.zeros(3)), stride=2, padding=1)
        assert out.shape == (1, 3, (9 + 2 - 3) // 2 + 1, (7 + 2 - 3) // 2 + 1)

    def test_channel_mismatch_rejected(self):
        with pytest.raises(T.DimensionError):
            T.conv2d(t(np.zeros((1, 2, 4, 4))), t(np.zeros((1, 3, 2, 2))), t(np.zeros(1)))

    def test_kernel_larger_than_padded_input_rejected(self):
        with pytest.raises(T.DimensionError):
            T.conv2d(t(np.zeros((1, 1, 2, 2))), t(np.zeros((1, 1, 4, 4))), t(np.zeros(1)))


class TestConvTranspose2d:
    def test_single_tap_broadcasts_kernel(self):
        v = 3.0
        w = np.arange(4, dtype=np.float32).reshape(1, 1, 2, 2)
        out = T.conv_transpose2d(t(np.full((1, 1, 1, 1), v)), t(w), t(np.zeros(1)))
        np.testing.assert_allclose(out.data, v * w)

    def test_output_shape_formula(self):
        out = T.conv_transpose2d(t(np.zeros((1, 1, 4, 4))), t(np.zeros((1, 1, 3, 3))),
                                 t(np.zeros(1)), stride=2, padding=1)
        assert out.shape == (1, 1, 7, 7)

    def test_non_positive_output_rejected(self):
        with pytest.raises(T.DimensionError):
            T.conv_transpose2d(t(np.zeros((1, 1, 1, 1))), t(np.zeros((1, 1, 2, 2))),
                               t(np.zeros(1)), stride=1, padding=2)

    def test_adjoint_of_conv2d_input_gradient(self):
        # forward of the transpose equals the conv2d input gradient for the
        # same kernel array on matched shapes
        rng = np.random.default_rng(1)
        # (H + 2p - k) divisible by the stride makes the shapes match exactly
        x = T.Tensor(rng.standard_normal((2, 3, 5, 5)), requires_grad=True, dtype=np.float64)
        k = T.Tensor(rng.standard_normal((4, 3, 3, 3)), dtype=np.float64)
        b0 = T.Tensor(np.zeros(4), dtype=np.float64)
        g = rng.standard_normal((2, 4, 3, 3))  # upstream for stride 2, pad 1
        with T.GradTape():
            y = T.conv2d(x, k, b0, stride=2, padding=1)
            loss = T.sum_all(T.mul(y, T.Tensor(g, dtype=np.float64)))
        loss.backward()
        adj = T.conv_transpose2d(T.Tensor(g, dtype=np.float64), k,
                                 T.Tensor(np.zeros(3), dtype=np.float64),
                                 stride=2, padding=1)
        assert relative_error(adj.data, x.grad) < 1e-12


class TestBatchnorm2d:
    def test_constant_input_maps_to_zero(self):
        x = t(np.full((3, 2, 4, 4), 7.5))
        out = T.batchnorm2d(x, t(np.ones(2)), t(np.zeros(2)), "train",
                            T.RunningStats.for_channels(2), epsilon=1e-5)
        assert np.abs(out.data).max() <= 1e-3

    def test_normalized_input_is_fixed_point(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((4, 3, 6, 6))
        x = (x - x.mean(axis=(0, 2, 3), keepdims=True)) / x.std(axis=(0, 2, 3), keepdims=True)
        out = T.batchnorm2d(t(x), t(np.ones(3)), t(np.zeros(3)), "train",
                            T.RunningStats.for_channels(3))
        np.testing.assert_allclose(out.data, x, atol=1e-4)

    def test_matches_two_pass_oracle(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((4, 2, 5, 5))
        gamma = rng.uniform(0.5, 1.5, 2)
        beta = rng.standard_normal(2)
        out = T.batchnorm2d(T.Tensor(x, dtype=np.float64), T.Tensor(gamma, dtype=np.float64),
                            T.Tensor(beta, dtype=np.float64), "train",
                            T.RunningStats.for_channels(2, np.float64))
        expected = batchnorm_train_oracle(x, gamma, beta)
        assert relative_error(out.data, expected) < 1e-5

    def test_eval_mode_uses_running_stats(self):
        stats = T.RunningStats(np.array([1.0], np.float32), np.array([4.0], np.float32))
        x = t(np.full((1, 1, 2, 2), 3.0))
        out = T.batchnorm2d(x, t(np.ones(1)), t(np.zeros(1)), "eval", stats, epsilon=0.0)
        np.testing.assert_allclose(out.data, np.full((1, 1, 2, 2), 1.0), rtol=1e-6)

    def test_single_element_channel_rejected_in_train(self):
        with pytest.raises(T.DegenerateVarianceError):
            T.batchnorm2d(t(np.zeros((1, 2, 1, 1))), t(np.ones(2)), t(np.zeros(2)),
                          "train", T.RunningStats.for_channels(2))

    def test_running_stats_updated_only_in_train(self):
        stats = T.RunningStats.for_channels(1)
        x = t(np.random.default_rng(0).standard_normal((2, 1, 3, 3)) + 5.0)
        T.batchnorm2d(x, t(np.ones(1)), t(np.zeros(1)), "eval", stats)
        np.testing.assert_array_equal(stats.mean, np.zeros(1, np.float32))
        T.batchnorm2d(x, t(np.ones(1)), t(np.zeros(1)), "train", stats)
        assert stats.mean[0] > 0.0


class TestActivations:
    def test_leaky_relu_values(self):
        out = T.leaky_relu(t([5.0, -1.0, 0.0]), slope=0.2)
        np.testing.assert_allclose(out.data, [5.0, -0.2, 0.0], rtol=1e-6)

    def test_leaky_relu_slope_domain(self):
        with pytest.raises(ValueError):
            T.leaky_relu(t([1.0]), slope=1.0)
        with pytest.raises(ValueError):
            T.leaky_relu(t([1.0]), slope=-0.1)

    def test_leaky_relu_kink_gradient_is_slope(self):
        x = T.Tensor(np.array([0.0]), requires_grad=True, dtype=np.float64)
        with T.GradTape():
            y = T.sum_all(T.leaky_relu(x, slope=0.2))
        y.backward()
        np.testing.assert_allclose(x.grad, [0.2])

    def test_tanh_range(self):
        out = T.tanh(t(np.linspace(-50, 50, 101)))
        assert out.data.min() >= -1.0 and out.data.max() <= 1.0


class TestLinear:
    def test_identity_weight(self):
        x = t(np.random.default_rng(1).standard_normal((3, 4)))
        out = T.linear(x, t(np.eye(4)), t(np.zeros(4)))
        np.testing.assert_allclose(out.data, x.data, rtol=1e-6)

    def test_zero_weight_gives_bias_rows(self):
        b = np.array([1.0, -2.0], np.float32)
        out = T.linear(t(np.ones((3, 4))), t(np.zeros((4, 2))), t(b))
        np.testing.assert_array_equal(out.data, np.tile(b, (3, 1)))

    def test_dimension_mismatch(self):
        with pytest.raises(T.DimensionError):
            T.linear(t(np.zeros((2, 3))), t(np.zeros((4, 2))), t(np.zeros(2)))


class TestLosses:
    def test_cross_entropy_uniform_logits(self):
        loss = T.softmax_cross_entropy(t(np.zeros((4, 2))), np.array([0, 1, 1, 0]))
        assert abs(loss.item() - np.log(2)) < 1e-6

    def test_cross_entropy_saturated(self):
        logits = np.zeros((3, 4), np.float32)
        labels = np.array([1, 2, 0])
        logits[np.arange(3), labels] = 50.0
        loss = T.softmax_cross_entropy(t(logits), labels)
        assert loss.item() < 1e-6

    def test_cross_entropy_label_range(self):
        with pytest.raises(ValueError):
            T.softmax_cross_entropy(t(np.zeros((2, 3))), np.array([0, 3]))

    def test_cross_entropy_gradient_formula(self):
        rng = np.random.default_rng(4)
        z = rng.standard_normal((5, 3))
        labels = rng.integers(0, 3, 5)
        logits = T.Tensor(z, requires_grad=True, dtype=np.float64)
        with T.GradTape():
            loss = T.softmax_cross_entropy(logits, labels)
        loss.backward()
        onehot = np.eye(3)[labels]
        np.testing.assert_allclose(logits.grad, (T.softmax(z) - onehot) / 5, rtol=1e-10)

    def test_bce_logit_zero(self):
        for target in (0.0, 1.0):
            loss = T.bce_with_logits(t(np.zeros(3)), np.full(3, target))
            assert abs(loss.item() - np.log(2)) < 1e-6

    def test_bce_saturated(self):
        loss = T.bce_with_logits(t(np.full(3, 50.0)), np.ones(3))
        assert loss.item() < 1e-6

    def test_bce_targets_binary(self):
        with pytest.raises(ValueError):
            T.bce_with_logits(t(np.zeros(2)), np.array([0.5, 1.0]))

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(5)
        p = T.softmax(rng.standard_normal((50, 7)) * 10)
        np.testing.assert_allclose(p.sum(axis=1), np.ones(50), atol=1e-6)


class TestBackward:
    def test_sum_gradient_is_ones(self):
        x = T.Tensor(np.random.default_rng(0).standard_normal((3, 4)), requires_grad=True)
        with T.GradTape():
            loss = T.sum_all(x)
        loss.backward()
        np.testing.assert_array_equal(x.grad, np.ones((3, 4), np.float32))

    def test_square_gradient_is_2x(self):
        data = np.random.default_rng(1).standard_normal((2, 3)).astype(np.float32)
        x = T.Tensor(data, requires_grad=True)
        with T.GradTape():
            loss = T.sum_all(T.mul(x, x))
        loss.backward()
        np.testing.assert_allclose(x.grad, 2 * data, rtol=1e-6)

    def test_value_used_twice_accumulates_both_paths(self):
        x = T.Tensor(np.array([1.0, 2.0]), requires_grad=True)
        with T.GradTape():
            y = T.add(x, x)
            loss = T.sum_all(y)
        loss.backward()
        np.testing.assert_array_equal(x.grad, np.array([2.0, 2.0], np.float32))

    def test_backward_on_non_scalar_rejected(self):
        x = T.Tensor(np.ones(3), requires_grad=True)
        with T.GradTape():
            y = T.add(x, x)
        with pytest.raises(T.GradientError):
            y.backward()

    def test_backward_twice_rejected(self):
        x = T.Tensor(np.ones(3), requires_grad=True)
        with T.GradTape():
            loss = T.sum_all(x)
        loss.backward()
        with pytest.raises(T.GradientError):
            loss.backward()

    def test_backward_without_tape_rejected(self):
        x = T.Tensor(np.ones(3), requires_grad=True)
        loss = T.sum_all(x)  # no active tape
        with pytest.raises(T.GradientError):
            loss.backward()

    def test_tape_is_topologically_ordered(self):
        x = T.Tensor(np.ones(2), requires_grad=True)
        with T.GradTape() as tape:
            a = T.mul(x, 2.0)
            b = T.add(a, x)
            c = T.sum_all(T.mul(b, a))
        produced_at = {id(node.out): i for i, node in enumerate(tape.nodes)}
        for i, node in enumerate(tape.nodes):
            for inp in node.inputs:
                if id(inp) in produced_at:
                    assert produced_at[id(inp)] < i
        c.backward()
        assert x.grad is not None

    def test_detach_blocks_gradient(self):
        # x enters once directly and once through a detached product; only the
        # direct path may contribute
        x = T.Tensor(np.full(3, 2.0), requires_grad=True)
        with T.GradTape():
            y = T.mul(x, 3.0).detach()
            loss = T.sum_all(T.mul(y, x))
        loss.backward()
        np.testing.assert_array_equal(x.grad, np.full(3, 6.0, np.float32))

    def test_grad_shapes_match_leaves(self):
        x = T.Tensor(np.ones((2, 3, 4)), requires_grad=True)
        with T.GradTape():
            loss = T.mean_all(T.reshape(x, (6, 4)))
        loss.backward()
        assert x.grad.shape == x.shape


class TestDeterminism:
    def test_same_inputs_bitwise_identical_outputs(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal((2, 3, 8, 8)).astype(np.float32)
        k = rng.standard_normal((4, 3, 3, 3)).astype(np.float32)
        b = rng.standard_normal(4).astype(np.float32)
        runs = [T.conv2d(T.Tensor(x.copy()), T.Tensor(k.copy()), T.Tensor(b.copy()),
                         stride=2, padding=1).data for _ in range(2)]
        np.testing.assert_array_equal(runs[0], runs[1])

    def test_finite_check_raises_on_nan(self):
        bad = T.Tensor(np.array([1.0, np.nan]))
        with pytest.raises(FloatingPointError):
            bad.assert_finite("test tensor")
