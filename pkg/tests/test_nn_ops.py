import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deepvqe.errors import ShapeError
from deepvqe.nn_ops import (
    Conv2dLayer,
    ConvSpec,
    GruState,
    GruWeights,
    batch_norm_infer,
    causal_conv2d,
    conv2d_stream_step,
    conv_stream_state,
    elu,
    gru_state,
    gru_step,
    linear,
    pixel_shuffle_freq,
    pixel_unshuffle_freq,
    shuffle_frame,
    softmax_axis,
    unfold_time,
)
from helpers import (
    naive_conv2d,
    naive_softmax,
    naive_unfold_time,
    scalar_gru_step,
    stream_conv,
)


def random_spec(rng, in_ch, out_ch, kernel, stride_f=1, pad=(0, 0)):
    w = rng.standard_normal((out_ch, in_ch) + kernel)
    b = rng.standard_normal(out_ch)
    return ConvSpec(in_ch, out_ch, kernel, (1, stride_f), pad, w, b)


class TestCausalConv2d:
    def test_identity_kernel(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((3, 5, 7))
        w = np.zeros((3, 3, 1, 1))
        for c in range(3):
            w[c, c, 0, 0] = 1.0
        spec = ConvSpec(3, 3, (1, 1), weights=w)
        np.testing.assert_array_equal(causal_conv2d(x, spec), x)

    def test_zero_weights_give_bias(self):
        x = np.random.default_rng(1).standard_normal((2, 4, 6))
        b = np.array([1.5, -2.0, 0.25])
        spec = ConvSpec(2, 3, (4, 3), (1, 2), (1, 1), None, b)
        out = causal_conv2d(x, spec)
        assert out.shape == (3, 4, 3)
        for c in range(3):
            np.testing.assert_allclose(out[c], b[c], rtol=1e-12)

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((2, 8, 9))
        spec = random_spec(rng, 2, 3, (4, 3), stride_f=2, pad=(1, 1))
        got = causal_conv2d(x, spec)
        want = naive_conv2d(x, spec.weights, spec.bias, 2, (1, 1))
        np.testing.assert_allclose(got, want, atol=1e-10)

    def test_many_random_instances_against_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(60):
            in_ch = int(rng.integers(1, 4))
            out_ch = int(rng.integers(1, 4))
            k_t = int(rng.integers(1, 5))
            k_f = int(rng.integers(1, 4))
            stride = int(rng.integers(1, 3))
            pad = (int(rng.integers(0, 2)), int(rng.integers(0, 2)))
            t = int(rng.integers(1, 7))
            f = int(rng.integers(k_f, 9))
            x = rng.standard_normal((in_ch, t, f))
            spec = random_spec(rng, in_ch, out_ch, (k_t, k_f), stride, pad)
            got = causal_conv2d(x, spec)
            want = naive_conv2d(x, spec.weights, spec.bias, stride, pad)
            np.testing.assert_allclose(got, want, atol=1e-9)

    def test_causality(self):
        rng = np.random.default_rng(4)
        spec = random_spec(rng, 2, 2, (4, 3), 2, (1, 1))
        x = rng.standard_normal((2, 10, 9))
        y = x.copy()
        y[:, 6:, :] = rng.standard_normal((2, 4, 9))
        np.testing.assert_array_equal(
            causal_conv2d(x, spec)[:, :6], causal_conv2d(y, spec)[:, :6]
        )

    def test_linearity_with_zero_bias(self):
        rng = np.random.default_rng(5)
        spec = random_spec(rng, 2, 3, (4, 3), 2, (1, 1))
        spec.bias[:] = 0
        layer = Conv2dLayer(spec)
        x = rng.standard_normal((2, 5, 9))
        y = rng.standard_normal((2, 5, 9))
        a, b = 0.7, -1.3
        lhs = layer.forward(a * x + b * y)
        rhs = a * layer.forward(x) + b * layer.forward(y)
        np.testing.assert_allclose(lhs, rhs, atol=1e-6)

    def test_channel_mismatch(self):
        spec = ConvSpec(3, 2, (1, 1))
        with pytest.raises(ShapeError):
            causal_conv2d(np.zeros((2, 3, 4)), spec)


class TestConvStreaming:
    def test_stream_bit_identical(self):
        rng = np.random.default_rng(6)
        spec = random_spec(rng, 3, 4, (4, 3), 2, (1, 1))
        layer = Conv2dLayer(spec)
        x = rng.standard_normal((3, 100, 9))
        np.testing.assert_array_equal(stream_conv(layer, x), layer.forward(x))

    def test_first_frame_equals_offline(self):
        rng = np.random.default_rng(7)
        spec = random_spec(rng, 2, 2, (4, 3), 1, (1, 1))
        x = rng.standard_normal((2, 1, 6))
        state = conv_stream_state(spec, 6)
        got = conv2d_stream_step(np.ascontiguousarray(x[:, 0, :]), state)
        np.testing.assert_array_equal(got, causal_conv2d(x, spec)[:, 0, :])

    def test_stream_past_ring_wrap(self):
        # More frames than the ring cycle to cover the wrap-around copy.
        rng = np.random.default_rng(8)
        spec = random_spec(rng, 2, 3, (4, 3), 1, (1, 1))
        layer = Conv2dLayer(spec)
        x = rng.standard_normal((2, 3 * Conv2dLayer.RING_CYCLE + 5, 7))
        np.testing.assert_array_equal(stream_conv(layer, x), layer.forward(x))

    def test_reset_equals_fresh_utterance(self):
        rng = np.random.default_rng(9)
        spec = random_spec(rng, 2, 2, (4, 3), 1, (1, 1))
        layer = Conv2dLayer(spec)
        state = layer.new_state(6)
        for _ in range(5):
            layer.step(rng.standard_normal((2, 6)), state)
        state.reset()
        x = rng.standard_normal((2, 4, 6))
        rows = [layer.step(np.ascontiguousarray(x[:, i, :]), state).copy() for i in range(4)]
        np.testing.assert_array_equal(np.stack(rows, axis=1), layer.forward(x))

    def test_frame_shape_error(self):
        spec = ConvSpec(2, 2, (4, 3), (1, 1), (1, 1))
        state = conv_stream_state(spec, 6)
        with pytest.raises(ShapeError):
            conv2d_stream_step(np.zeros((3, 6)), state)


class TestBatchNorm:
    def test_identity_params(self):
        x = np.random.default_rng(10).standard_normal((3, 4, 5))
        out = batch_norm_infer(x, np.zeros(3), np.ones(3), np.ones(3), np.zeros(3), eps=0.0)
        np.testing.assert_allclose(out, x, rtol=1e-12)

    def test_zero_gamma_gives_beta(self):
        x = np.random.default_rng(11).standard_normal((2, 3, 4))
        beta = np.array([0.5, -1.0])
        out = batch_norm_infer(x, np.zeros(2), np.ones(2), np.zeros(2), beta)
        for c in range(2):
            np.testing.assert_allclose(out[c], beta[c], atol=1e-12)

    def test_matches_scalar_formula(self):
        rng = np.random.default_rng(12)
        x = rng.standard_normal((3, 4, 5))
        mean, gamma, beta = (rng.standard_normal(3) for _ in range(3))
        var = rng.uniform(0.1, 2.0, 3)
        eps = 1e-5
        got = batch_norm_infer(x, mean, var, gamma, beta, eps)
        want = np.empty_like(x)
        for c in range(3):
            for t in range(4):
                for f in range(5):
                    want[c, t, f] = gamma[c] * (x[c, t, f] - mean[c]) / np.sqrt(var[c] + eps) + beta[c]
        np.testing.assert_allclose(got, want, atol=1e-7)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            batch_norm_infer(np.zeros((2, 3, 4)), np.zeros(3), np.ones(3), np.ones(3), np.zeros(3))

    def test_negative_variance(self):
        with pytest.raises(ShapeError):
            batch_norm_infer(np.zeros((1, 2, 2)), np.zeros(1), -np.ones(1), np.ones(1), np.zeros(1))


class TestElu:
    @pytest.mark.parametrize(
        "x,expected",
        [(0.0, 0.0), (2.0, 2.0), (-1.0, np.expm1(-1.0))],
    )
    def test_closed_forms(self, x, expected):
        assert elu(np.array([x]))[0] == pytest.approx(expected, abs=1e-12)

    def test_alpha(self):
        assert elu(np.array([-2.0]), alpha=0.5)[0] == pytest.approx(0.5 * np.expm1(-2.0))

    @given(st.floats(-50, 50))
    @settings(max_examples=100, deadline=None)
    def test_continuity_and_bound(self, v):
        out = float(elu(np.array([v]))[0])
        assert out >= -1.0
        if v > 0:
            assert out == v


class TestGru:
    def _random_weights(self, rng, n_in, n_hidden):
        return GruWeights(
            *(rng.standard_normal((n_hidden, n_in)) if k % 3 == 0
              else rng.standard_normal((n_hidden, n_hidden)) if k % 3 == 1
              else rng.standard_normal(n_hidden)
              for k in range(9))
        )

    def test_zero_weights_halve_state(self):
        w = GruWeights(
            *(np.zeros((4, 3)) if k % 3 == 0 else np.zeros((4, 4)) if k % 3 == 1 else np.zeros(4)
              for k in range(9))
        )
        state = GruState(np.array([1.0, -2.0, 4.0, 0.5]))
        out = gru_step(np.zeros(3), state, w)
        np.testing.assert_allclose(out, [0.5, -1.0, 2.0, 0.25], rtol=1e-12)

    def test_zero_input_zero_state_closed_form(self):
        rng = np.random.default_rng(13)
        w = self._random_weights(rng, 3, 4)
        out = gru_step(np.zeros(3), gru_state(w), w)
        sig = 1.0 / (1.0 + np.exp(-w.b_z))
        np.testing.assert_allclose(out, sig * np.tanh(w.b_h), atol=1e-12)

    def test_matches_scalar_oracle_over_steps(self):
        rng = np.random.default_rng(14)
        w = self._random_weights(rng, 8, 8)
        state = gru_state(w)
        h_oracle = np.zeros(8)
        for _ in range(5):
            x = rng.standard_normal(8)
            got = gru_step(x, state, w)
            h_oracle = scalar_gru_step(x, h_oracle, w)
            np.testing.assert_allclose(got, h_oracle, atol=1e-6)

    def test_reset(self):
        rng = np.random.default_rng(15)
        w = self._random_weights(rng, 2, 3)
        state = gru_state(w)
        gru_step(rng.standard_normal(2), state, w)
        state.reset()
        np.testing.assert_array_equal(state.hidden, 0)

    def test_size_mismatch(self):
        rng = np.random.default_rng(16)
        w = self._random_weights(rng, 3, 4)
        with pytest.raises(ShapeError):
            gru_step(np.zeros(5), gru_state(w), w)


class TestLinear:
    def test_identity(self):
        x = np.arange(4.0)
        np.testing.assert_array_equal(linear(x, np.eye(4), np.zeros(4)), x)

    def test_zero_weight_gives_bias(self):
        b = np.array([1.0, 2.0])
        np.testing.assert_array_equal(linear(np.ones(3), np.zeros((2, 3)), b), b)

    def test_matches_dot_oracle(self):
        rng = np.random.default_rng(17)
        w, b, x = rng.standard_normal((3, 4)), rng.standard_normal(3), rng.standard_normal(4)
        want = np.array([sum(w[i, j] * x[j] for j in range(4)) + b[i] for i in range(3)])
        np.testing.assert_allclose(linear(x, w, b), want, atol=1e-7)

    def test_size_mismatch(self):
        with pytest.raises(ShapeError):
            linear(np.zeros(3), np.zeros((2, 4)), np.zeros(2))


class TestPixelShuffle:
    def test_smallest_case(self):
        x = np.array([[[1.0]], [[2.0]]])
        out = pixel_shuffle_freq(x)
        np.testing.assert_array_equal(out, [[[1.0, 2.0]]])

    def test_constant_preserved(self):
        x = np.full((4, 3, 5), 2.5)
        out = pixel_shuffle_freq(x)
        assert out.shape == (2, 3, 10)
        assert np.all(out == 2.5)

    def test_multiset_preserved(self):
        rng = np.random.default_rng(18)
        x = rng.standard_normal((6, 4, 5))
        out = pixel_shuffle_freq(x)
        np.testing.assert_array_equal(np.sort(out.ravel()), np.sort(x.ravel()))

    def test_inverse(self):
        rng = np.random.default_rng(19)
        x = rng.standard_normal((6, 4, 5))
        np.testing.assert_array_equal(pixel_unshuffle_freq(pixel_shuffle_freq(x)), x)

    def test_interleave_order(self):
        # out(c', t, 2f'+p) = x(p*c + c', t, f')
        c, t, f = 2, 3, 4
        x = np.arange(2 * c * t * f, dtype=float).reshape(2 * c, t, f)
        out = pixel_shuffle_freq(x)
        for cp in range(c):
            for tt in range(t):
                for fp in range(f):
                    for p in range(2):
                        assert out[cp, tt, 2 * fp + p] == x[p * c + cp, tt, fp]

    def test_frame_variant_matches(self):
        rng = np.random.default_rng(20)
        x = rng.standard_normal((6, 1, 5))
        whole = pixel_shuffle_freq(x)[:, 0, :]
        frame = shuffle_frame(np.ascontiguousarray(x[:, 0, :]), np.zeros((3, 10)))
        np.testing.assert_array_equal(frame, whole)

    def test_odd_channels(self):
        with pytest.raises(ShapeError):
            pixel_shuffle_freq(np.zeros((3, 2, 2)))


class TestSoftmax:
    def test_uniform(self):
        out = softmax_axis(np.zeros(8))
        np.testing.assert_allclose(out, 1.0 / 8, rtol=1e-12)

    def test_saturation(self):
        x = np.zeros(5)
        x[2] = 1000.0
        out = softmax_axis(x)
        assert out[2] == pytest.approx(1.0, abs=1e-12)
        assert np.all(out[[0, 1, 3, 4]] < 1e-12)

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(21)
        x = rng.standard_normal(50)
        np.testing.assert_allclose(softmax_axis(x), naive_softmax(x), atol=1e-7)

    def test_axis(self):
        rng = np.random.default_rng(22)
        x = rng.standard_normal((4, 6))
        out = softmax_axis(x, axis=0)
        np.testing.assert_allclose(out.sum(axis=0), 1.0, rtol=1e-9)

    @given(st.lists(st.floats(-100, 100), min_size=1, max_size=30))
    @settings(max_examples=100, deadline=None)
    def test_distribution_property(self, vals):
        out = softmax_axis(np.array(vals))
        assert np.all(out >= 0)
        assert out.sum() == pytest.approx(1.0, abs=1e-9)


class TestUnfoldTime:
    def test_dmax_one_is_identity_slice(self):
        rng = np.random.default_rng(23)
        x = rng.standard_normal((2, 5, 3))
        out = unfold_time(x, 1)
        np.testing.assert_array_equal(out[:, :, 0, :], x)

    def test_first_frame_only_zero_delay(self):
        rng = np.random.default_rng(24)
        x = rng.standard_normal((2, 4, 3))
        out = unfold_time(x, 4)
        np.testing.assert_array_equal(out[:, 0, 0, :], x[:, 0, :])
        assert np.all(out[:, 0, 1:, :] == 0)

    def test_matches_index_oracle(self):
        rng = np.random.default_rng(25)
        x = rng.standard_normal((3, 6, 4))
        np.testing.assert_array_equal(unfold_time(x, 4), naive_unfold_time(x, 4))

    def test_bad_dmax(self):
        with pytest.raises(ShapeError):
            unfold_time(np.zeros((1, 2, 3)), 0)


def test_all_ops_finite_on_finite_input():
    rng = np.random.default_rng(26)
    x = rng.standard_normal((2, 6, 8)) * 10
    spec = random_spec(rng, 2, 3, (4, 3), 2, (1, 1))
    for out in (
        causal_conv2d(x, spec),
        elu(x),
        softmax_axis(x, axis=-1),
        unfold_time(x, 3),
        pixel_shuffle_freq(x),
    ):
        assert np.all(np.isfinite(out))
