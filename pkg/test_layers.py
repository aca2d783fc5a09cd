"""
Tests for layer shape formulas, parameter counts and forward passes
"""
import itertools

import numpy as np
import pytest
from hypothesis import given, settings as hypothesis_settings
from hypothesis import strategies as st

from src.layers import (
    conv_forward,
    conv_output_shape,
    conv_param_count,
    dense_forward,
    dense_param_count,
    flatten,
    init_conv_params,
    init_dense_params,
    init_pool_params,
    maxpool_backward,
    maxpool_forward,
    pool_output_shape,
    pool_param_count,
    relu_backward,
    relu_forward,
    softmax,
    sparse_connectivity,
    unflatten,
)
from src.layers.conv import connectivity_mask
from src.models.params import LayerParams
from src.models.tensor import Tensor
from src.schemas import Conv2DSpec, DenseSpec, PoolSpec
from src.utils.error_handler import ShapeError


def count_windows(size, f, p, s):
    """Valid top-left placements of an f-wide window on a zero-padded axis"""
    return len(range(0, size + 2 * p - f + 1, s))


def conv_oracle(x, weights, biases, s, p):
    """Direct sliding-window convolution in float64"""
    x = np.pad(x.astype(np.float64), ((p, p), (p, p), (0, 0)))
    f, _, c, n_f = weights.shape
    h2 = (x.shape[0] - f) // s + 1
    w2 = (x.shape[1] - f) // s + 1
    out = np.zeros((h2, w2, n_f))
    for i in range(h2):
        for j in range(w2):
            window = x[i * s:i * s + f, j * s:j * s + f, :]
            for k in range(n_f):
                out[i, j, k] = biases[k] + np.sum(window * weights[:, :, :, k])
    return out


def conv_params(weights, biases):
    return LayerParams(weights=Tensor(weights, dtype=np.float64), biases=Tensor(biases, dtype=np.float64))


class TestConvOutputShape:
    def test_reference_c1(self):
        assert conv_output_shape(32, 32, 3, 5, 0, 1, 6) == (28, 28, 6)

    def test_unit_kernel(self):
        assert conv_output_shape(32, 32, 1, 1, 0, 1, 1) == (32, 32, 1)

    def test_padded_stride_two(self):
        assert conv_output_shape(32, 32, 1, 5, 2, 2, 8) == (16, 16, 8)

    def test_kernel_larger_than_padded_input(self):
        with pytest.raises(ShapeError):
            conv_output_shape(3, 3, 1, 5, 0, 1, 1)

    def test_matches_window_enumeration(self):
        cases = 0
        for h, w, f, p, s in itertools.product(range(1, 13), range(1, 13), range(1, 6), range(3), range(1, 4)):
            if h + 2 * p < f or w + 2 * p < f:
                continue
            shape = conv_output_shape(h, w, 2, f, p, s, 4)
            assert shape == (count_windows(h, f, p, s), count_windows(w, f, p, s), 4)
            cases += 1
        assert cases > 2000


class TestPoolOutputShape:
    def test_halving(self):
        assert pool_output_shape(28, 28, 6, 2, 2) == (14, 14, 6)

    def test_odd_size_floors(self):
        assert pool_output_shape(5, 5, 1, 2, 2) == (2, 2, 1)

    def test_extent_exceeds_input(self):
        with pytest.raises(ShapeError):
            pool_output_shape(1, 4, 1, 2, 2)

    def test_matches_window_enumeration(self):
        for w1, h1, se, sd in itertools.product(range(1, 13), range(1, 13), range(1, 5), range(1, 4)):
            if w1 < se or h1 < se:
                continue
            assert pool_output_shape(w1, h1, 3, se, sd) == (
                count_windows(w1, se, 0, sd), count_windows(h1, se, 0, sd), 3
            )


class TestParameterCounts:
    def test_c1_count(self):
        assert conv_param_count(Conv2DSpec(n_f=6, f=5, in_channels=1)) == 156

    def test_single_weight(self):
        assert conv_param_count(Conv2DSpec(n_f=1, f=1, in_channels=1)) == 2

    def test_wide_conv(self):
        assert conv_param_count(Conv2DSpec(n_f=32, f=3, in_channels=16)) == 4640

    def test_dense_weights_only(self):
        assert dense_param_count(DenseSpec(in_features=3072, out_features=4704), include_bias=False) == 14_450_688

    def test_dense_with_bias(self):
        assert dense_param_count(DenseSpec(in_features=1, out_features=1), include_bias=True) == 2
        assert dense_param_count(DenseSpec(in_features=400, out_features=128), include_bias=True) == 51_328

    def test_plain_pooling_has_no_parameters(self):
        spec = PoolSpec(extent=2, stride=2)
        assert pool_param_count(spec, 6) == 0
        assert init_pool_params(spec, 6) is None

    def test_affine_pooling_counts(self):
        spec = PoolSpec(trainable_affine=True)
        assert pool_param_count(spec, 6) == 12
        assert init_pool_params(spec, 6).scalar_count() == 12

    def test_random_specs_match_instantiated_scalars(self, rng):
        for _ in range(100):
            conv = Conv2DSpec(n_f=int(rng.integers(1, 9)), f=int(rng.integers(1, 6)),
                              in_channels=int(rng.integers(1, 9)))
            assert conv_param_count(conv) == init_conv_params(conv, rng).scalar_count()
            dense = DenseSpec(in_features=int(rng.integers(1, 50)), out_features=int(rng.integers(1, 50)))
            assert dense_param_count(dense) == init_dense_params(dense, rng).scalar_count()

    def test_connectivity_counts_linked_channels(self):
        table = sparse_connectivity(16, 6, 3, seed=5)
        spec = Conv2DSpec(n_f=16, f=5, in_channels=6, connectivity=table)
        mask = connectivity_mask(spec)
        assert conv_param_count(spec) == int(np.broadcast_to(mask, (5, 5, 6, 16)).sum()) + 16
        assert conv_param_count(spec) == 25 * 16 * 3 + 16


class TestConnectivityTable:
    def test_exact_links_per_filter(self):
        table = sparse_connectivity(16, 6, 4, seed=1)
        assert len(table) == 16
        assert all(sum(row) == 4 for row in table)

    def test_seeded(self):
        assert sparse_connectivity(16, 6, 3, seed=9) == sparse_connectivity(16, 6, 3, seed=9)

    def test_row_without_links_is_rejected(self):
        with pytest.raises(ValueError):
            Conv2DSpec(n_f=2, f=1, in_channels=2, connectivity=((True, False), (False, False)))

    def test_masked_channel_contributes_nothing(self, rng):
        spec = Conv2DSpec(n_f=1, f=3, in_channels=2, connectivity=((True, False),))
        weights = rng.normal(size=(3, 3, 2, 1))
        x = rng.normal(size=(5, 5, 2))
        out = conv_forward(Tensor(x, dtype=np.float64), spec, conv_params(weights, np.zeros(1)))
        masked = weights.copy()
        masked[:, :, 1, :] = 0
        np.testing.assert_allclose(out.data, conv_oracle(x, masked, np.zeros(1), 1, 0), rtol=1e-10)


class TestConvForward:
    def test_degenerate_one_by_one(self):
        spec = Conv2DSpec(n_f=1, f=1, in_channels=1)
        out = conv_forward(Tensor([[[3.0]]]), spec, conv_params(np.full((1, 1, 1, 1), 2.0), [0.5]))
        assert out.data.reshape(-1).tolist() == [6.5]

    def test_all_ones(self):
        spec = Conv2DSpec(n_f=1, f=2, in_channels=1)
        out = conv_forward(Tensor(np.ones((3, 3, 1))), spec, conv_params(np.ones((2, 2, 1, 1)), [0.0]))
        assert out.shape == (2, 2, 1)
        assert np.all(out.data == 4)

    def test_identity_filter(self, rng):
        spec = Conv2DSpec(n_f=1, f=1, in_channels=1)
        x = Tensor(rng.normal(size=(6, 7, 1)))
        out = conv_forward(x, spec, conv_params(np.ones((1, 1, 1, 1)), [0.0]))
        np.testing.assert_array_equal(out.data, x.data)

    def test_channel_mismatch(self, rng):
        spec = Conv2DSpec(n_f=1, f=1, in_channels=2)
        with pytest.raises(ShapeError):
            conv_forward(Tensor(np.ones((3, 3, 1))), spec, conv_params(np.ones((1, 1, 2, 1)), [0.0]))

    def test_matches_sliding_window_oracle(self, rng):
        for _ in range(200):
            h, w = rng.integers(1, 13, size=2)
            c = int(rng.integers(1, 4))
            f = int(rng.integers(1, 6))
            p = int(rng.integers(0, 3))
            s = int(rng.integers(1, 4))
            if h + 2 * p < f or w + 2 * p < f:
                continue
            n_f = int(rng.integers(1, 5))
            spec = Conv2DSpec(n_f=n_f, f=f, s=s, p=p, in_channels=c)
            x = rng.normal(size=(h, w, c)).astype(np.float32)
            weights = rng.normal(size=(f, f, c, n_f)).astype(np.float32)
            biases = rng.normal(size=n_f).astype(np.float32)
            params = LayerParams(weights=Tensor(weights), biases=Tensor(biases))
            out = conv_forward(Tensor(x), spec, params)
            np.testing.assert_allclose(out.data, conv_oracle(x, weights, biases, s, p), rtol=1e-5, atol=1e-5)

    def test_batched_input_matches_single(self, rng):
        spec = Conv2DSpec(n_f=3, f=3, in_channels=2)
        params = init_conv_params(spec, rng, dtype=np.float64)
        batch = rng.normal(size=(4, 6, 6, 2))
        out = conv_forward(Tensor(batch, dtype=np.float64), spec, params)
        for i in range(4):
            np.testing.assert_allclose(out.data[i], conv_forward(Tensor(batch[i], dtype=np.float64), spec,
                                                                 params).data, rtol=1e-12)


class TestRelu:
    def test_forward(self):
        np.testing.assert_allclose(relu_forward(Tensor([-3.2, 0.0, 2.5])).data, [0.0, 0.0, 2.5])

    def test_backward(self):
        grad = relu_backward(Tensor([5.0, 5.0]), Tensor([-1.0, 2.0]))
        assert grad.data.tolist() == [0.0, 5.0]


class TestMaxPool:
    def test_unique_argmax_routing(self):
        spec = PoolSpec(extent=2, stride=2)
        x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(2, 2, 1))
        out, cache = maxpool_forward(x, spec)
        assert out.data.reshape(-1).tolist() == [4.0]
        grad, param_grads = maxpool_backward(Tensor(np.ones((1, 1, 1))), cache, spec)
        assert grad.data[:, :, 0].tolist() == [[0.0, 0.0], [0.0, 1.0]]
        assert param_grads is None

    def test_zero_grad(self, rng):
        spec = PoolSpec()
        out, cache = maxpool_forward(Tensor(rng.normal(size=(4, 4, 2))), spec)
        grad, _ = maxpool_backward(Tensor(np.zeros(out.shape)), cache, spec)
        assert not grad.data.any()

    def test_ties_resolve_to_first_position(self):
        spec = PoolSpec(extent=2, stride=2)
        _, cache = maxpool_forward(Tensor(np.full((2, 2, 1), 7.0)), spec)
        grad, _ = maxpool_backward(Tensor(np.ones((1, 1, 1))), cache, spec)
        assert grad.data[:, :, 0].tolist() == [[1.0, 0.0], [0.0, 0.0]]

    @pytest.mark.parametrize("extent,stride", [(2, 2), (3, 2), (2, 1), (3, 3)])
    def test_matches_window_scan(self, rng, extent, stride):
        x = rng.normal(size=(8, 8, 3))
        out, _ = maxpool_forward(Tensor(x), PoolSpec(extent=extent, stride=stride))
        side = (8 - extent) // stride + 1
        expected = np.empty((side, side, 3))
        for i, j, ch in itertools.product(range(side), range(side), range(3)):
            window = x[i * stride:i * stride + extent, j * stride:j * stride + extent, ch]
            expected[i, j, ch] = max(window.reshape(-1).tolist())
        assert out.shape == (side, side, 3)
        np.testing.assert_array_equal(out.data, expected)

    def test_constant_input(self):
        out, _ = maxpool_forward(Tensor(np.full((4, 4, 2), 3.5)), PoolSpec(extent=2, stride=2))
        assert np.all(out.data == 3.5)

    def test_affine_scales_and_shifts(self):
        spec = PoolSpec(trainable_affine=True)
        params = LayerParams(coeff=Tensor([2.0]), biases=Tensor([0.5]))
        x = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(2, 2, 1))
        out, _ = maxpool_forward(x, spec, params)
        assert out.data.reshape(-1).tolist() == [8.5]


class TestFlattenAndDense:
    def test_flatten_length(self):
        assert flatten(Tensor(np.zeros((5, 5, 16)))).shape == (400,)

    def test_flatten_roundtrip(self, rng):
        x = Tensor(rng.normal(size=(3, 4, 2)))
        np.testing.assert_array_equal(unflatten(flatten(x), (3, 4, 2)).data, x.data)

    def test_single_element(self):
        assert flatten(Tensor(np.full((1, 1, 1), 9.0))).data.tolist() == [9.0]

    def test_identity_weights(self, rng):
        spec = DenseSpec(in_features=4, out_features=4)
        x = Tensor(rng.normal(size=4))
        params = LayerParams(weights=Tensor(np.eye(4)), biases=Tensor(np.zeros(4)))
        np.testing.assert_allclose(dense_forward(x, spec, params).data, x.data)

    def test_hand_sum(self):
        spec = DenseSpec(in_features=2, out_features=1)
        params = LayerParams(weights=Tensor([[1.0, 1.0]]), biases=Tensor([0.0]))
        assert dense_forward(Tensor([2.0, 3.0]), spec, params).data.tolist() == [5.0]

    def test_length_mismatch(self):
        spec = DenseSpec(in_features=3, out_features=1)
        params = LayerParams(weights=Tensor(np.ones((1, 3))), biases=Tensor([0.0]))
        with pytest.raises(ShapeError):
            dense_forward(Tensor([1.0, 2.0]), spec, params)


class TestSoftmax:
    def test_symmetric_pair(self):
        np.testing.assert_allclose(softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])

    def test_uniform_over_36(self):
        probs = softmax(Tensor(np.zeros(36), dtype=np.float64)).data
        np.testing.assert_allclose(probs, np.full(36, 1 / 36), rtol=1e-12)
        assert abs(probs.sum() - 1) <= 1e-9

    def test_large_logits_do_not_overflow(self):
        probs = softmax(Tensor([1000.0, 0.0], dtype=np.float64)).data
        assert np.all(np.isfinite(probs))
        assert probs[0] == pytest.approx(1.0)
        assert probs[1] == pytest.approx(0.0, abs=1e-300)

    @hypothesis_settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-50, 50), min_size=2, max_size=36), st.floats(-100, 100))
    def test_sum_shift_and_argmax(self, logits, shift):
        z = np.array(logits, dtype=np.float64)
        probs = softmax(Tensor(z, dtype=np.float64)).data
        assert abs(probs.sum() - 1) <= 1e-9
        np.testing.assert_allclose(softmax(Tensor(z + shift, dtype=np.float64)).data, probs, atol=1e-6)
        assert probs[np.argmax(z)] == probs.max()
