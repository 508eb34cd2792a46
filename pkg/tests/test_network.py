import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from foodnet.errors import ConfigError, ShapeError
from foodnet.gradcheck import NetSpec, gradient_check
from foodnet.network import (FLATTEN, MAXPOOL, RELU, SOFTMAX, LayerSpec, NetworkModel, backward,
                             build_network, build_paper_network, conv, cross_entropy, dense, dropout,
                             forward, predict, softmax)
from foodnet.rng import Rng


def paper_param_count(side=128):
    """Independent tally from the valid-convolution shape chain."""
    total, s, c = 0, side, 3
    for k, out in ((7, 32), (5, 64), (3, 128)):
        total += k * k * c * out + out
        s, c = (s - k + 1) // 2, out
    flat = s * s * c
    return total + flat * 128 + 128 + 128 * 10 + 10


@pytest.fixture(scope="module")
def paper_net():
    return build_paper_network(seed=3)


def small_net(seed=0, rates=(0.25, 0.5)):
    layers = [conv(3, 4), RELU, MAXPOOL, dropout(rates[0]), FLATTEN, dense(6), RELU, dropout(rates[1]),
              dense(3), SOFTMAX]
    return build_network(layers, (10, 10, 3), ["a", "b", "c"], seed)


class TestBuild:
    def test_chain(self, paper_net):
        kinds = [l.kind for l in paper_net.layers]
        assert kinds == ["conv", "relu", "maxpool", "conv", "relu", "maxpool", "conv", "relu", "maxpool",
                         "dropout", "flatten", "dense", "relu", "dropout", "dense", "softmax"]
        convs = [(l.size, l.channels) for l in paper_net.layers if l.kind == "conv"]
        assert convs == [(7, 32), (5, 64), (3, 128)]
        assert [l.rate for l in paper_net.layers if l.kind == "dropout"] == [0.25, 0.5]

    def test_spatial_chain(self, paper_net):
        spatial = [s[0] for s in paper_net.output_shapes if len(s) == 3]
        assert spatial == [122, 122, 61, 57, 57, 28, 26, 26, 13, 13]

    def test_first_dense_shape(self, paper_net):
        assert 128 * 13 * 13 == 21632
        assert paper_net.params[6].shape == (21632, 128)

    def test_parameter_count(self, paper_net):
        assert paper_param_count() == 2_900_170
        assert paper_net.n_params == 2_900_170

    def test_deterministic(self, paper_net):
        again = build_paper_network(seed=3)
        assert all(np.array_equal(a, b) for a, b in zip(paper_net.params, again.params))
        other = build_paper_network(seed=4)
        assert not np.array_equal(paper_net.params[0], other.params[0])

    def test_init_scales(self, paper_net):
        w1, w_last = paper_net.params[0], paper_net.params[8]
        assert abs(w1.std() - math.sqrt(2 / 147)) < 0.02 * math.sqrt(2 / 147) * 5
        assert abs(w_last.std() - math.sqrt(1 / 128)) < 0.15 * math.sqrt(1 / 128)
        assert all(not b.any() for b in paper_net.params[1::2])

    def test_reduced_input(self):
        net = build_paper_network(0, input_shape=(64, 64, 3))
        assert net.params[6].shape == (128 * 5 * 5, 128)
        assert net.n_params == paper_param_count(64)

    def test_bad_dropout_rate(self):
        with pytest.raises(ConfigError):
            LayerSpec("dropout", rate=1.0)

    def test_inconsistent_params(self, paper_net):
        params = list(paper_net.params)
        params[0] = params[0][:5]
        with pytest.raises(ShapeError):
            NetworkModel(paper_net.layers, params, paper_net.class_names)


class TestForward:
    def test_eval_rows_sum_to_one(self, paper_net, np_rng):
        probs, _ = forward(paper_net, np_rng.random((2, 128, 128, 3)).astype(np.float32), "eval")
        assert probs.shape == (2, 10)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-5)

    def test_wrong_shape(self, paper_net):
        with pytest.raises(ShapeError):
            forward(paper_net, np.zeros((1, 64, 64, 3), np.float32))

    def test_zero_final_layer_is_uniform(self, np_rng):
        net = small_net()
        net.params[-2][:] = 0
        probs, _ = forward(net, np_rng.random((4, 10, 10, 3)), "eval")
        np.testing.assert_allclose(probs, 1 / 3, rtol=1e-6)
        assert predict(net, np_rng.random((4, 10, 10, 3))).tolist() == [0, 0, 0, 0]

    def test_zero_final_layer_paper_net(self, paper_net, np_rng):
        net = paper_net.copy()
        net.params[-2][:] = 0
        probs, _ = forward(net, np_rng.random((1, 128, 128, 3)).astype(np.float32), "eval")
        np.testing.assert_allclose(probs, 0.1, rtol=1e-6)

    def test_dropout_zero_equals_no_dropout(self, np_rng):
        with_dp = small_net(rates=(0.0, 0.0))
        layers = [l for l in with_dp.layers if l.kind != "dropout"]
        without = NetworkModel(layers, with_dp.params, with_dp.class_names, with_dp.input_shape)
        x = np_rng.random((3, 10, 10, 3)).astype(np.float32)
        p1, _ = forward(with_dp, x, "train", Rng(1))
        p2, _ = forward(without, x, "train", Rng(1))
        assert np.array_equal(p1, p2)

    def test_train_mode_needs_rng(self, np_rng):
        with pytest.raises(ValueError):
            forward(small_net(), np_rng.random((1, 10, 10, 3)), "train")

    def test_inverted_dropout_expectation(self):
        layers = [FLATTEN, dropout(0.5), dense(2), SOFTMAX]
        net = build_network(layers, (1, 4, 5), ["a", "b"], 0, dtype=np.float64)
        x = np.linspace(0.1, 1.0, 20).reshape(1, 1, 4, 5)
        batch = np.repeat(x, 100_000, axis=0)
        _, cache = forward(net, batch, "train", Rng(9), keep_outputs=True)
        mean_train = cache.outputs[1].mean(axis=0)
        _, ev = forward(net, x, "eval", keep_outputs=True)
        np.testing.assert_allclose(mean_train, ev.outputs[1][0], rtol=0.02)

    def test_predict_ignores_dropout_rates(self, np_rng):
        a = small_net(rates=(0.25, 0.5))
        b = NetworkModel([dropout(0.9) if l.kind == "dropout" else l for l in a.layers], a.params,
                         a.class_names, a.input_shape)
        x = np_rng.random((6, 10, 10, 3))
        assert np.array_equal(predict(a, x), predict(b, x))


class TestSoftmaxCrossEntropy:
    def test_equal_logits(self):
        np.testing.assert_allclose(softmax(np.zeros(10)), 0.1)

    def test_log2(self):
        np.testing.assert_allclose(softmax(np.array([0.0, math.log(2)])), [1 / 3, 2 / 3])

    def test_large_logits(self):
        out = softmax(np.array([1000.0, 1000.0]))
        assert np.all(np.isfinite(out))
        np.testing.assert_allclose(out, [0.5, 0.5])

    @given(st.lists(st.floats(-50, 50), min_size=2, max_size=12), st.floats(-1e3, 1e3))
    def test_shift_invariance(self, logits, c):
        z = np.array(logits)
        p = softmax(z)
        assert abs(p.sum() - 1) < 1e-5
        np.testing.assert_allclose(softmax(z + c), p, atol=1e-6)

    def test_uniform_loss(self):
        assert cross_entropy(np.full((3, 10), 0.1), [0, 4, 9]) == pytest.approx(math.log(10), abs=1e-6)
        assert cross_entropy(np.full((3, 10), 0.1), [0, 4, 9]) == pytest.approx(2.302585, abs=1e-6)

    def test_certain_loss(self):
        p = np.eye(10)[[2, 5]]
        assert cross_entropy(p, [2, 5]) == 0.0

    def test_direct_formula(self):
        p = np.array([[0.5, 0.5], [0.75, 0.25]])
        assert cross_entropy(p, [0, 1]) == pytest.approx(-(math.log(0.5) + math.log(0.25)) / 2)
        assert cross_entropy(p, [0, 1]) == pytest.approx(1.039721, abs=1e-6)

    def test_floor_on_zero_probability(self):
        assert cross_entropy(np.array([[1.0, 0.0]]), [1]) == pytest.approx(-math.log(1e-12))

    def test_label_out_of_range(self):
        with pytest.raises(ShapeError):
            cross_entropy(np.full((1, 10), 0.1), [10])

    @given(st.integers(2, 12), st.integers(0, 2**32 - 1))
    def test_nonnegative(self, k, seed):
        g = np.random.default_rng(seed)
        p = softmax(g.standard_normal((4, k)))
        assert cross_entropy(p, g.integers(0, k, 4)) >= 0


class TestBackward:
    def test_fused_logit_gradient(self, np_rng):
        # a net that is just logits = x @ W + b; grad wrt b is the summed logit gradient
        net = build_network([FLATTEN, dense(4), SOFTMAX], (1, 1, 3), list("abcd"), 0, dtype=np.float64)
        x = np_rng.random((5, 1, 1, 3))
        y = np.array([0, 1, 2, 3, 1])
        probs, cache = forward(net, x, "train")
        grads = backward(net, cache, y)
        onehot = np.eye(4)[y]
        np.testing.assert_allclose(grads[1], ((probs - onehot) / 5).sum(axis=0), atol=1e-12)

        def loss_at(z):
            return cross_entropy(softmax(z), y)

        z = x.reshape(5, 3) @ net.params[0] + net.params[1]
        fd = np.zeros_like(z)
        for i in np.ndindex(z.shape):
            zp, zm = z.copy(), z.copy()
            zp[i] += 1e-5
            zm[i] -= 1e-5
            fd[i] = (loss_at(zp) - loss_at(zm)) / 2e-5
        np.testing.assert_allclose(fd, (probs - onehot) / 5, atol=1e-9)

    def test_zero_input_zero_first_kernel_gradient(self):
        net = small_net(seed=2)
        _, cache = forward(net, np.zeros((3, 10, 10, 3), np.float32), "train", Rng(0))
        grads = backward(net, cache, [0, 1, 2])
        assert not grads[0].any()
        assert grads[-1].any()

    def test_label_count_mismatch(self):
        net = small_net()
        _, cache = forward(net, np.zeros((3, 10, 10, 3), np.float32), "train", Rng(0))
        with pytest.raises(ShapeError):
            backward(net, cache, [0, 1])

    def test_tiny_network_finite_differences(self):
        spec = NetSpec((conv(3, 2), FLATTEN, dense(3), SOFTMAX), (8, 8, 1), 3)
        assert gradient_check(spec, seed=1).max_rel_error < 1e-5

    def test_gradient_shapes(self):
        net = small_net()
        _, cache = forward(net, np.ones((2, 10, 10, 3), np.float32), "train", Rng(0))
        grads = backward(net, cache, [0, 1])
        assert [g.shape for g in grads] == [p.shape for p in net.params]
        assert all(g.dtype == np.float32 for g in grads)
