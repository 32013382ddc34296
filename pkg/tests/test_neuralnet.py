#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
网络层、损失函数、反向传播、Adam 与训练循环的测试
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from app.errors import ConfigError, DataError, NumericalError, SchemaError
from app.neuralnet.neuralnet_layers import BatchNorm, LayerSpec, batchnorm_update
from app.neuralnet.neuralnet_losses import loss_gradient, loss_value
from app.neuralnet.neuralnet_network import (
    gradient_check, init_weights, load_checkpoint, save_checkpoint,
)
from app.neuralnet.neuralnet_train import TrainConfig, adam_step, minibatches, train


def _classifier_specs(n_out: int):
    return [LayerSpec("dense", 6), LayerSpec("relu"), LayerSpec("dropout", rate=0.3),
            LayerSpec("batchnorm"), LayerSpec("dense", 5), LayerSpec("relu"),
            LayerSpec("batchnorm"), LayerSpec("dense", n_out), LayerSpec("softmax")]


def _regression_specs():
    return [LayerSpec("dense", 6), LayerSpec("relu"), LayerSpec("dropout", rate=0.2),
            LayerSpec("batchnorm"), LayerSpec("dense", 4), LayerSpec("relu"),
            LayerSpec("dense", 1), LayerSpec("identity")]


class TestLayers:
    def test_identity_network(self, rng):
        net = init_weights(3, [LayerSpec("dense", 3), LayerSpec("identity")])
        net.layers[0].params["W"][...] = np.eye(3)
        x = rng.normal(size=(4, 3))
        assert_allclose(net.forward(x), x)

    def test_relu(self):
        net = init_weights(3, [LayerSpec("relu")])
        assert_allclose(net.forward(np.array([[-1.0, 0.0, 2.0]])), [[0.0, 0.0, 2.0]])

    def test_softmax_symmetry(self):
        net = init_weights(2, [LayerSpec("softmax")])
        assert_allclose(net.forward(np.zeros((1, 2))), [[0.5, 0.5]])

    def test_dropout_inactive_at_inference(self, rng):
        net = init_weights(5, [LayerSpec("dropout", rate=0.5)])
        x = rng.normal(size=(10, 5))
        assert_array_equal(net.forward(x, "infer"), x)
        trained = net.forward(x, "train")
        kept = trained != 0
        assert_allclose(trained[kept], 2.0 * x[kept])

    def test_batchnorm_standardized_batch(self):
        layer = BatchNorm(LayerSpec("batchnorm"), 2)
        batch = np.array([[1.0, -1.0], [-1.0, 1.0], [1.0, 1.0], [-1.0, -1.0]])
        out = batchnorm_update(layer, batch)
        assert_allclose(out, batch / np.sqrt(1.0 + layer.epsilon))

    def test_batchnorm_constant_column(self):
        layer = BatchNorm(LayerSpec("batchnorm"), 1)
        out = batchnorm_update(layer, np.full((5, 1), 3.0))
        assert_allclose(out, 0.0)

    def test_batchnorm_running_statistics(self):
        layer = BatchNorm(LayerSpec("batchnorm"), 1)
        batchnorm_update(layer, np.array([[2.0], [4.0]]))
        assert_allclose(layer.buffers["running_mean"], [0.01 * 3.0])
        assert_allclose(layer.buffers["running_var"], [0.99 + 0.01 * 1.0])

    def test_batchnorm_needs_two_rows(self):
        layer = BatchNorm(LayerSpec("batchnorm"), 1)
        with pytest.raises(DataError):
            batchnorm_update(layer, np.array([[1.0]]))

    def test_invalid_spec(self):
        with pytest.raises(ConfigError):
            LayerSpec("conv")
        with pytest.raises(ConfigError):
            LayerSpec("dropout", rate=1.0)

    def test_input_width_mismatch(self):
        net = init_weights(3, [LayerSpec("dense", 2)])
        with pytest.raises(DataError):
            net.forward(np.zeros((2, 4)))


class TestLosses:
    def test_mse_zero(self):
        assert loss_value("mse", np.ones((3, 1)), np.ones(3)) == 0.0

    def test_cross_entropy_half(self):
        assert_allclose(loss_value("cross_entropy", np.array([[0.5, 0.5]]), [0]), np.log(2.0))

    def test_jbce_single_cut(self):
        assert_allclose(loss_value("jbce", np.array([[0.5, 0.5]]), [0]), np.log(2.0))

    def test_jbce_calibrated_cdf_is_best(self):
        labels = np.array([0, 0, 1, 2, 2, 2])
        calibrated = np.tile([2 / 6, 1 / 6, 3 / 6], (6, 1))
        best = loss_value("jbce", calibrated, labels)
        for other in ([0.4, 0.1, 0.5], [0.3, 0.3, 0.4], [1 / 3, 1 / 3, 1 / 3]):
            assert best <= loss_value("jbce", np.tile(other, (6, 1)), labels)

    def test_rejects_invalid_probabilities(self):
        with pytest.raises(DataError):
            loss_value("cross_entropy", np.array([[0.7, 0.7]]), [0])

    def test_rejects_out_of_range_label(self):
        with pytest.raises(DataError):
            loss_value("jbce", np.array([[0.5, 0.5]]), [2])

    def test_unknown_loss(self):
        with pytest.raises(ConfigError):
            loss_value("hinge", np.zeros((1, 1)), [0])

    @pytest.mark.parametrize("loss", ["cross_entropy", "jbce"])
    def test_output_gradient_matches_differences(self, loss, rng):
        output = rng.dirichlet(np.full(4, 5.0), size=5)
        labels = rng.integers(0, 4, size=5)
        grad = loss_gradient(loss, output, labels)
        step = 1e-7
        for i in range(5):
            for j in range(4):
                plus, minus = output.copy(), output.copy()
                plus[i, j] += step
                minus[i, j] -= step
                # 扰动后行和不为 1，直接用未检查的公式
                numeric = (_raw_loss(loss, plus, labels) - _raw_loss(loss, minus, labels)) / (2 * step)
                assert_allclose(grad[i, j], numeric, rtol=1e-5, atol=1e-6)


def _raw_loss(loss, output, labels):
    n = output.shape[0]
    if loss == "cross_entropy":
        return -np.mean(np.log(output[np.arange(n), labels]))
    cdf = np.cumsum(output, axis=1)[:, :-1]
    indicator = labels[:, None] < np.arange(1, output.shape[1])[None, :]
    return -np.sum(np.where(indicator, np.log(cdf), np.log(1 - cdf))) / n


class TestGradientCheck:
    @pytest.mark.parametrize("seed", range(10))
    def test_regression_network(self, seed):
        rng = np.random.default_rng(seed)
        net = init_weights(4, _regression_specs(), seed=seed)
        x = rng.normal(size=(8, 4))
        y = rng.normal(size=(8, 1))
        assert gradient_check(net, x, y, "mse") < 1e-5

    @pytest.mark.parametrize("seed", range(10))
    @pytest.mark.parametrize("loss", ["cross_entropy", "jbce"])
    def test_classification_network(self, seed, loss):
        rng = np.random.default_rng(seed)
        net = init_weights(4, _classifier_specs(3), seed=seed)
        x = rng.normal(size=(8, 4))
        labels = rng.integers(0, 3, size=8)
        assert gradient_check(net, x, labels, loss) < 1e-5

    def test_running_statistics_restored(self, rng):
        net = init_weights(4, _regression_specs(), seed=1)
        before = net.snapshot_buffers()
        gradient_check(net, rng.normal(size=(6, 4)), rng.normal(size=(6, 1)), "mse")
        after = net.snapshot_buffers()
        for index in before:
            for name in before[index]:
                assert_array_equal(before[index][name], after[index][name])

    def test_constant_target_gives_zero_gradients(self, rng):
        net = init_weights(3, [LayerSpec("dense", 4), LayerSpec("relu"), LayerSpec("dense", 1)])
        x = rng.normal(size=(5, 3))
        target = net.forward(x)
        _, grads = net.loss_and_gradients(x, target, "mse")
        for grad in grads:
            assert_allclose(grad, 0.0)


class TestAdam:
    def test_first_step_moves_by_learning_rate(self, rng):
        net = init_weights(3, [LayerSpec("dense", 2)])
        before = [p.copy() for _, _, p in net.parameters()]
        grads = [rng.normal(size=p.shape) + 0.5 for p in before]
        adam_step(net, grads, learning_rate=0.01)
        for (_, _, p), old, g in zip(net.parameters(), before, grads):
            assert_allclose(p - old, -0.01 * np.sign(g), atol=0.01 * 1e-3)

    def test_zero_gradient_no_change(self):
        net = init_weights(3, [LayerSpec("dense", 2)])
        before = [p.copy() for _, _, p in net.parameters()]
        adam_step(net, [np.zeros_like(p) for p in before])
        for (_, _, p), old in zip(net.parameters(), before):
            assert_array_equal(p, old)


class TestTraining:
    def test_minibatches_merge_singleton(self, rng):
        batches = minibatches(9, 4, rng)
        assert [len(b) for b in batches] == [4, 5]
        assert_array_equal(np.sort(np.concatenate(batches)), np.arange(9))

    def test_loss_decreases(self, rng):
        x = rng.random((64, 2))
        y = (x[:, :1] - 0.5 * x[:, 1:])
        net = init_weights(2, [LayerSpec("dense", 16), LayerSpec("relu"), LayerSpec("dense", 1)], seed=3)
        history = train(net, x, y, TrainConfig(epochs=60, batch_size=16, learning_rate=1e-2, seed=3))
        assert len(history.losses) == 60
        assert history.final_loss < 0.5 * history.losses[0]

    def test_linear_fit(self):
        x = np.linspace(0.0, 1.0, 64)[:, None]
        y = 2.0 * x + 1.0
        net = init_weights(1, [LayerSpec("dense", 1), LayerSpec("identity")], seed=0)
        history = train(net, x, y, TrainConfig(epochs=200, batch_size=16, learning_rate=0.05))
        assert history.final_loss < 1e-4

    def test_deterministic(self, rng):
        x = rng.random((40, 3))
        y = rng.random((40, 1))
        states = []
        for _ in range(2):
            net = init_weights(3, _regression_specs(), seed=5)
            history = train(net, x, y, TrainConfig(epochs=5, batch_size=8, seed=5))
            states.append((history.losses, [p.copy() for _, _, p in net.parameters()]))
        assert states[0][0] == states[1][0]
        for a, b in zip(states[0][1], states[1][1]):
            assert_array_equal(a, b)

    def test_non_finite_loss(self):
        net = init_weights(1, [LayerSpec("dense", 1)])
        x = np.ones((4, 1))
        with pytest.raises(NumericalError):
            train(net, x, np.array([[np.inf]] * 4), TrainConfig(epochs=1, batch_size=4))

    def test_invalid_config(self):
        with pytest.raises(ConfigError):
            TrainConfig(epochs=0)


class TestCheckpoint:
    def test_round_trip_preserves_predictions(self, tmp_path, rng):
        net = init_weights(4, _classifier_specs(3), seed=2)
        x = rng.normal(size=(12, 4))
        train(net, x, rng.integers(0, 3, size=12), TrainConfig(loss="jbce", epochs=3, batch_size=4))
        path = save_checkpoint(net, tmp_path / "net.json")
        again = load_checkpoint(path)
        assert_array_equal(again.forward(x), net.forward(x))
        assert again.step == net.step

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "other.json"
        path.write_text('{"format": "something-else"}', encoding="utf-8")
        with pytest.raises(SchemaError):
            load_checkpoint(path)
