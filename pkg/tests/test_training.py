"""Losses, optimizer behavior, splitting, and the training loop."""
import math

import numpy as np
import pytest

from noisymlp.data import Dataset, make_synthetic
from noisymlp.errors import ConfigError, TrainingError
from noisymlp.network import ActivationKind, Layer, Network, build_mlp
from noisymlp.noise import NoiseSpec
from noisymlp.training import (AdadeltaState, LossKind, TrainConfig,
                               TrainReport, adadelta_step, evaluate_error,
                               loss_and_gradient, softmax, split_dataset,
                               train, write_history_csv)

XENT = LossKind.SOFTMAX_CROSS_ENTROPY
MSE = LossKind.MEAN_SQUARED_ERROR


def rng(seed=0):
    return np.random.default_rng(seed)


class TestSplit:
    def test_three_to_one_on_60000(self):
        data = Dataset(np.zeros((60_000, 1)), np.zeros(60_000, dtype=int),
                       num_classes=2)
        train_set, valid_set = split_dataset(data, (3, 1), seed=0)
        assert len(train_set) == 45_000
        assert len(valid_set) == 15_000

    def test_exact_division(self):
        data = Dataset(np.linspace(0, 1, 4)[:, None])
        train_set, valid_set = split_dataset(data, (3, 1), seed=0)
        assert (len(train_set), len(valid_set)) == (3, 1)

    def test_ceil_rounding(self):
        data = Dataset(np.linspace(0, 1, 5)[:, None])
        train_set, valid_set = split_dataset(data, (3, 1), seed=0)
        assert (len(train_set), len(valid_set)) == (4, 1)

    def test_deterministic_and_seed_sensitive(self):
        data = Dataset(np.linspace(0, 1, 64)[:, None])
        a1, b1 = split_dataset(data, (3, 1), seed=5)
        a2, b2 = split_dataset(data, (3, 1), seed=5)
        assert np.array_equal(a1.inputs, a2.inputs)
        assert np.array_equal(b1.inputs, b2.inputs)
        a3, _ = split_dataset(data, (3, 1), seed=6)
        assert not np.array_equal(a1.inputs, a3.inputs)

    def test_disjoint_and_covering(self):
        data = Dataset(np.linspace(0, 1, 11)[:, None])
        train_set, valid_set = split_dataset(data, (3, 1), seed=1)
        merged = np.concatenate([train_set.inputs, valid_set.inputs])
        assert np.array_equal(np.sort(merged, axis=0), data.inputs)

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            Dataset(np.zeros((0, 2)))


class TestLoss:
    def test_uniform_softmax_cross_entropy(self):
        loss, grad = loss_and_gradient(XENT, np.array([0.0, 0.0]), 0)
        assert math.isclose(loss, math.log(2.0), rel_tol=1e-15)
        assert np.allclose(grad, [-0.5, 0.5], rtol=0, atol=1e-15)

    def test_confident_output_closed_form(self):
        # -log softmax([5,0,0])[0] = log(1 + 2 e^-5)
        loss, _ = loss_and_gradient(XENT, np.array([5.0, 0.0, 0.0]), 0)
        assert math.isclose(loss, math.log(1.0 + 2.0 * math.exp(-5.0)),
                            rel_tol=1e-12)
        assert math.isclose(loss, 0.013385, rel_tol=1e-4)

    def test_perfect_mse(self):
        out = np.array([0.25, 0.5, 0.75])
        loss, grad = loss_and_gradient(MSE, out, out.copy())
        assert loss == 0.0
        assert np.array_equal(grad, np.zeros(3))

    def test_mse_values(self):
        loss, grad = loss_and_gradient(MSE, np.array([1.0, 0.0]),
                                       np.array([0.0, 0.0]))
        assert math.isclose(loss, 0.5, rel_tol=1e-15)
        assert np.allclose(grad, [1.0, 0.0], rtol=0, atol=1e-15)

    def test_softmax_normalizes(self):
        values = rng(3).uniform(-30, 30, size=(50, 7))
        sums = softmax(values).sum(axis=1)
        assert np.max(np.abs(sums - 1.0)) <= 1e-12

    def test_batched_rows_match_single_calls(self):
        outputs = rng(4).uniform(-2, 2, size=(6, 5))
        targets = rng(5).integers(0, 5, size=6)
        losses, grads = loss_and_gradient(XENT, outputs, targets)
        for i in range(6):
            loss_i, grad_i = loss_and_gradient(XENT, outputs[i],
                                               int(targets[i]))
            assert math.isclose(losses[i], loss_i, rel_tol=1e-15)
            assert np.allclose(grads[i], grad_i, rtol=1e-15, atol=0)

    def test_class_index_range_checked(self):
        with pytest.raises(ValueError):
            loss_and_gradient(XENT, np.array([0.0, 0.0]), 2)

    def test_gradient_matches_finite_differences(self):
        out = rng(6).uniform(-1, 1, size=4)
        target = 2
        _, grad = loss_and_gradient(XENT, out, target)
        step = 1e-6
        for j in range(4):
            bumped = out.copy()
            bumped[j] += step
            up, _ = loss_and_gradient(XENT, bumped, target)
            bumped[j] -= 2 * step
            down, _ = loss_and_gradient(XENT, bumped, target)
            assert math.isclose(grad[j], (up - down) / (2 * step),
                                rel_tol=1e-6, abs_tol=1e-9)


class TestAdadelta:
    def test_zero_gradient_is_fixed_point(self):
        params = [np.array([1.0, -2.0, 3.0])]
        state = AdadeltaState.for_params(params)
        adadelta_step(state, params, [np.zeros(3)])
        assert np.array_equal(params[0], [1.0, -2.0, 3.0])

    def test_fresh_state_scalar_step(self):
        # By hand: acc_g = 0.05, step = -sqrt(1e-6)/sqrt(0.05 + 1e-6).
        params = [np.array([0.0])]
        state = AdadeltaState.for_params(params, rho=0.95, epsilon=1e-6)
        adadelta_step(state, params, [np.array([1.0])])
        assert abs(params[0][0] - (-0.0044721)) <= 1e-7
        assert math.isclose(state.acc_grad_sq[0][0], 0.05, rel_tol=1e-15)

    def test_first_step_is_sqrt_eps_scaled_for_any_sign_pattern(self):
        # With zero accumulators the first step has the same sqrt(eps)
        # magnitude whatever the gradient's sign or (nearly) its size.
        def first_step(g):
            params = [np.array([0.0])]
            state = AdadeltaState.for_params(params, rho=0.95, epsilon=1e-6)
            adadelta_step(state, params, [np.array([g])])
            return float(params[0][0])

        assert first_step(1.0) == -first_step(-1.0)
        assert math.isclose(abs(first_step(1.0)), abs(first_step(1e3)),
                            rel_tol=1e-4)
        assert math.isclose(abs(first_step(1.0)),
                            math.sqrt(1e-6) / math.sqrt(0.05 + 1e-6),
                            rel_tol=1e-12)

    def test_quadratic_descent(self):
        x = np.array([1.0])
        params = [x]
        state = AdadeltaState.for_params(params)
        initial = float(x[0] ** 2)
        for _ in range(500):
            adadelta_step(state, params, [2.0 * x])
        assert abs(x[0]) < 0.1
        assert x[0] ** 2 < initial

    def test_non_finite_gradient_aborts_without_mutation(self):
        params = [np.array([1.0, 2.0])]
        state = AdadeltaState.for_params(params)
        with pytest.raises(TrainingError):
            adadelta_step(state, params, [np.array([np.nan, 0.0])])
        assert np.array_equal(params[0], [1.0, 2.0])
        assert np.array_equal(state.acc_grad_sq[0], np.zeros(2))

    def test_shape_mismatch_rejected(self):
        params = [np.zeros(3)]
        state = AdadeltaState.for_params(params)
        with pytest.raises(ConfigError):
            adadelta_step(state, params, [np.zeros(4)])

    def test_rho_and_epsilon_validated(self):
        with pytest.raises(ConfigError):
            AdadeltaState.for_params([np.zeros(1)], rho=1.0)
        with pytest.raises(ConfigError):
            AdadeltaState.for_params([np.zeros(1)], epsilon=0.0)


def constant_dataset():
    """All-identical inputs with conflicting labels: nothing to learn,
    so the validation error can never improve after the first epoch."""
    inputs = np.full((16, 2), 0.5)
    labels = np.tile([0, 1], 8)
    return Dataset(inputs, labels, num_classes=2)


class TestTrain:
    def test_separable_data_reaches_zero_validation_error(self):
        data = make_synthetic("two-gaussians", 200, 0.02, seed=1)
        net = build_mlp(2, [8], 2, rng(2))
        config = TrainConfig(batch_size=20, max_epochs=50, patience=50,
                             seed=3)
        report = train(net, data, config)
        assert report.best_valid_error == 0.0
        assert report.stopped_epoch <= 50

    def test_patience_one_stops_at_epoch_two(self):
        net = build_mlp(2, [4], 2, rng(4))
        config = TrainConfig(batch_size=4, max_epochs=50, patience=1, seed=5)
        report = train(net, constant_dataset(), config)
        assert report.stop_reason == TrainReport.EARLY_STOPPED
        assert report.stopped_epoch == 2
        assert report.best_epoch == 1

    def test_max_epochs_one(self):
        net = build_mlp(2, [4], 2, rng(6))
        config = TrainConfig(batch_size=4, max_epochs=1, patience=3, seed=7)
        report = train(net, constant_dataset(), config)
        assert len(report.history) == 1
        assert report.stop_reason == TrainReport.MAX_EPOCHS

    def test_best_snapshot_matches_history_minimum(self):
        data = make_synthetic("xor", 240, 0.08, seed=8)
        net = build_mlp(2, [12], 2, rng(9))
        config = TrainConfig(batch_size=30, max_epochs=25, patience=25,
                             seed=10)
        report = train(net, data, config)
        best_in_history = min(s.valid_error for s in report.history)
        assert report.best_valid_error == best_in_history
        best_epoch_stats = report.history[report.best_epoch - 1]
        assert best_epoch_stats.valid_error == report.best_valid_error
        # The restored network reproduces the recorded best error.
        _, valid_set = split_dataset(
            data, config.split_ratio,
            np.random.SeedSequence(config.seed).spawn(2)[0])
        assert evaluate_error(net, valid_set, XENT) == report.best_valid_error

    def test_snapshot_never_postdates_best_epoch(self):
        data = make_synthetic("xor", 240, 0.08, seed=11)
        net = build_mlp(2, [12], 2, rng(12))
        config = TrainConfig(batch_size=30, max_epochs=20, patience=5,
                             seed=13)
        report = train(net, data, config)
        later = [s.valid_error for s in report.history[report.best_epoch:]]
        assert all(v >= report.best_valid_error for v in later)

    def test_bitwise_reproducibility(self):
        data = make_synthetic("two-gaussians", 120, 0.1, seed=14)
        reports = []
        nets = []
        for _ in range(2):
            net = build_mlp(2, [6], 2, rng(15),
                            hidden_noise=NoiseSpec.dropout(0.3))
            config = TrainConfig(batch_size=16, max_epochs=8, patience=8,
                                 seed=16)
            reports.append(train(net, data, config))
            nets.append(net)
        for s1, s2 in zip(reports[0].history, reports[1].history):
            assert s1.train_loss == s2.train_loss
            assert s1.valid_error == s2.valid_error
        for l1, l2 in zip(nets[0].layers, nets[1].layers):
            assert np.array_equal(l1.weights, l2.weights)
            assert np.array_equal(l1.biases, l2.biases)

    def test_autoencoder_training_reduces_reconstruction_error(self):
        data = make_synthetic("two-gaussians", 160, 0.05, seed=17)
        net = build_mlp(2, [6], 2, rng(18),
                        hidden_activation=ActivationKind.SIGMOID)
        config = TrainConfig(loss=MSE, batch_size=20, max_epochs=30,
                             patience=30, seed=19)
        initial = evaluate_error(net, data, MSE)
        report = train(net, data, config)
        assert report.best_valid_error < initial

    def test_frozen_biases_stay_zero(self):
        data = make_synthetic("two-gaussians", 120, 0.05, seed=20)
        net = build_mlp(2, [5], 2, rng(21), bias_frozen=True)
        config = TrainConfig(batch_size=20, max_epochs=5, patience=5, seed=22)
        train(net, data, config)
        for layer in net.layers:
            assert np.array_equal(layer.biases, np.zeros(layer.fan_out))

    def test_output_width_mismatch_rejected(self):
        data = make_synthetic("two-gaussians", 40, 0.05, seed=23)
        net = build_mlp(2, [4], 3, rng(24))
        with pytest.raises(ConfigError):
            train(net, data, TrainConfig(seed=25))

    def test_non_finite_loss_reports_context(self):
        # Two huge linear layers overflow the output to inf on batch 0.
        data = make_synthetic("two-gaussians", 40, 0.05, seed=26)
        net = Network(2, [Layer(np.full((2, 2), 1e300), np.zeros(2),
                                ActivationKind.LINEAR),
                          Layer(np.full((2, 2), 1e300), np.zeros(2),
                                ActivationKind.LINEAR)])
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(TrainingError, match="epoch 1"):
                train(net, data, TrainConfig(batch_size=10, seed=27))

    def test_history_csv(self, tmp_path):
        data = make_synthetic("two-gaussians", 80, 0.05, seed=28)
        net = build_mlp(2, [4], 2, rng(29))
        report = train(net, data, TrainConfig(batch_size=20, max_epochs=3,
                                              patience=3, seed=30))
        path = tmp_path / "history.csv"
        write_history_csv(report, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "epoch,train_loss,valid_error"
        assert len(lines) == 1 + len(report.history)
        assert lines[1].startswith("1,")
