"""Losses, the adaptive optimizer, dataset splitting, and the train loop.

The optimizer keeps two exponential moving averages per parameter (of
squared gradients and of squared updates) and needs no global learning
rate; rho and epsilon are the only knobs. Training runs shuffled
mini-batches of sampled forward passes, evaluates the validation error
after each epoch with the deterministic expected pass, and early-stops
on a patience counter, returning the best-validation snapshot.
"""
import enum
import math
from dataclasses import dataclass

import numpy as np

from noisymlp import kernels
from noisymlp.errors import ConfigError, TrainingError
from noisymlp.network import backprop, forward_expected, forward_sampled


class LossKind(enum.Enum):
    SOFTMAX_CROSS_ENTROPY = "xent"
    MEAN_SQUARED_ERROR = "mse"


def softmax(values):
    """Row-wise softmax of raw output values (max-shifted for stability)."""
    v = np.asarray(values, dtype=np.float64)
    shifted = v - v.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def loss_and_gradient(kind, output, target):
    """Loss value(s) and the gradient w.r.t. the raw network output.

    Cross-entropy consumes raw (linear) outputs and integer class
    targets; MSE consumes real targets of the output's shape and is
    normalized by the output dimension. Batched outputs give per-sample
    losses and per-sample gradient rows (no batch averaging here).
    """
    out = np.asarray(output, dtype=np.float64)
    if kind is LossKind.SOFTMAX_CROSS_ENTROPY:
        t = np.asarray(target)
        probs = softmax(out)
        if out.ndim == 1:
            t = int(t)
            if not 0 <= t < out.shape[0]:
                raise ValueError(f"class index {t} out of range")
            shifted = out - out.max()
            loss = float(np.log(np.exp(shifted).sum()) - shifted[t])
            grad = probs.copy()
            grad[t] -= 1.0
            return loss, grad
        t = t.astype(np.intp)
        if t.shape != (out.shape[0],):
            raise ValueError("one class index per batch row is required")
        if np.any(t < 0) or np.any(t >= out.shape[1]):
            raise ValueError("class index out of range")
        rows = np.arange(out.shape[0])
        shifted = out - out.max(axis=1, keepdims=True)
        losses = np.log(np.exp(shifted).sum(axis=1)) - shifted[rows, t]
        grad = probs.copy()
        grad[rows, t] -= 1.0
        return losses, grad
    if kind is LossKind.MEAN_SQUARED_ERROR:
        t = np.asarray(target, dtype=np.float64)
        if t.shape != out.shape:
            raise ValueError(
                f"target shape {t.shape} does not match output {out.shape}")
        diff = out - t
        d = out.shape[-1]
        loss = (diff * diff).sum(axis=-1) / d
        grad = 2.0 / d * diff
        if out.ndim == 1:
            return float(loss), grad
        return loss, grad
    raise ValueError(f"unknown loss kind {kind!r}")


@dataclass
class AdadeltaState:
    """Per-parameter squared-gradient and squared-update accumulators."""

    acc_grad_sq: list
    acc_update_sq: list
    rho: float = 0.95
    epsilon: float = 1e-6

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ConfigError("rho must lie in (0, 1)")
        if self.epsilon <= 0.0:
            raise ConfigError("epsilon must be positive")

    @classmethod
    def for_params(cls, params, rho=0.95, epsilon=1e-6):
        return cls([np.zeros_like(p) for p in params],
                   [np.zeros_like(p) for p in params], rho, epsilon)


def adadelta_step(state, params, grads):
    """Apply one update to every parameter array, in place.

    Per array: decay the squared-gradient accumulator with the new
    gradient, step by -sqrt(acc_update + eps) / sqrt(acc_grad + eps)
    times the gradient, then decay the squared-update accumulator with
    the step taken. Non-finite gradients abort before any mutation.
    """
    if not (len(params) == len(grads) == len(state.acc_grad_sq)):
        raise ConfigError("parameter, gradient and state counts differ")
    for p, g in zip(params, grads):
        if p.shape != np.shape(g):
            raise ConfigError(
                f"gradient shape {np.shape(g)} does not match parameter "
                f"shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingError("non-finite gradient; step aborted")
    for p, g, ag, au in zip(params, grads, state.acc_grad_sq,
                            state.acc_update_sq):
        kernels.adadelta_update(p, np.asarray(g, dtype=np.float64), ag, au,
                                state.rho, state.epsilon)
    return params


@dataclass
class TrainConfig:
    loss: LossKind = LossKind.SOFTMAX_CROSS_ENTROPY
    batch_size: int = 100
    max_epochs: int = 100
    patience: int = 10
    split_ratio: tuple = (3, 1)
    seed: int = 0
    rho: float = 0.95
    epsilon: float = 1e-6

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        a, b = self.split_ratio
        if a <= 0 or b <= 0:
            raise ConfigError("split ratio components must be positive")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    valid_error: float


@dataclass
class TrainReport:
    """Outcome of one training run.

    ``best_weights``/``best_biases`` snapshot the parameters of the best
    validation epoch; the live network is restored to them when training
    returns.
    """

    best_weights: list
    best_biases: list
    history: list
    stopped_epoch: int
    stop_reason: str  # "early_stopped" | "max_epochs"
    best_epoch: int
    best_valid_error: float

    EARLY_STOPPED = "early_stopped"
    MAX_EPOCHS = "max_epochs"


def split_dataset(data, ratio, seed):
    """Randomly partition a dataset into train and validation parts.

    For ratio a:b the train part takes ceil(n * a / (a + b)) samples of
    a seeded permutation and the validation part the rest. ``seed`` may
    be an int or a ``SeedSequence``.
    """
    n = len(data)
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    a, b = ratio
    if a <= 0 or b <= 0:
        raise ConfigError("split ratio components must be positive")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = math.ceil(n * a / (a + b))
    return data.subset(perm[:n_train]), data.subset(perm[n_train:])


def _trainable(net):
    """Trainable parameter arrays of a network, in a fixed order."""
    params = []
    for layer in net.layers:
        params.append(layer.weights)
        if not layer.bias_frozen:
            params.append(layer.biases)
    return params


def _gradient_arrays(net, grads):
    arrays = []
    for i, layer in enumerate(net.layers):
        arrays.append(grads.weights[i])
        if not layer.bias_frozen:
            arrays.append(grads.biases[i])
    return arrays


def _targets_for(config, data):
    if config.loss is LossKind.SOFTMAX_CROSS_ENTROPY:
        if data.labels is None:
            raise ConfigError("cross-entropy training needs labeled data")
        return data.labels
    return data.inputs


def evaluate_error(net, data, loss):
    """Validation/test metric under expected-activation inference:
    classification error rate for cross-entropy, mean per-sample MSE
    for squared error."""
    outputs = forward_expected(net, data.inputs)
    if loss is LossKind.SOFTMAX_CROSS_ENTROPY:
        predictions = outputs.argmax(axis=1)
        return float(np.mean(predictions != data.labels))
    diff = outputs - data.inputs
    return float(np.mean((diff * diff).sum(axis=1) / data.d))


def train(net, data, config):
    """Fit ``net`` on ``data`` and return the best-snapshot report.

    All randomness (split, shuffling, noise sampling) derives from
    ``config.seed``, so equal inputs reproduce the report bit for bit.
    The network is left holding the best-validation parameters.
    """
    if config.loss is LossKind.SOFTMAX_CROSS_ENTROPY:
        if data.num_classes is None or net.output_width != data.num_classes:
            raise ConfigError(
                f"output width {net.output_width} does not match "
                f"{data.num_classes} classes")
    elif net.output_width != data.d:
        raise ConfigError(
            f"output width {net.output_width} does not match input "
            f"dimension {data.d} for reconstruction")

    split_seq, loop_seq = np.random.SeedSequence(config.seed).spawn(2)
    train_set, valid_set = split_dataset(data, config.split_ratio, split_seq)
    if len(train_set) == 0:
        raise ValueError("training split is empty")
    if len(valid_set) == 0:
        raise ValueError("validation split is empty; adjust the split ratio")
    train_targets = _targets_for(config, train_set)

    rng = np.random.default_rng(loop_seq)
    params = _trainable(net)
    state = AdadeltaState.for_params(params, config.rho, config.epsilon)

    best_error = np.inf
    best_epoch = 0
    best_weights = None
    best_biases = None
    stall = 0
    history = []
    stop_reason = TrainReport.MAX_EPOCHS
    stopped_epoch = config.max_epochs

    n = len(train_set)
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            inputs = train_set.inputs[idx]
            targets = train_targets[idx]
            trace = forward_sampled(net, inputs, rng)
            losses, out_grad = loss_and_gradient(config.loss, trace.output,
                                                 targets)
            batch_loss = float(np.sum(losses))
            if not np.isfinite(batch_loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch "
                    f"{start // config.batch_size}")
            loss_sum += batch_loss
            grads = backprop(net, trace, out_grad)
            adadelta_step(state, params, _gradient_arrays(net, grads))
        valid_error = evaluate_error(net, valid_set, config.loss)
        history.append(EpochStats(epoch, loss_sum / n, valid_error))
        if valid_error < best_error:
            best_error = valid_error
            best_epoch = epoch
            best_weights = [layer.weights.copy() for layer in net.layers]
            best_biases = [layer.biases.copy() for layer in net.layers]
            stall = 0
        else:
            stall += 1
            if stall >= config.patience:
                stop_reason = TrainReport.EARLY_STOPPED
                stopped_epoch = epoch
                break
        stopped_epoch = epoch

    for layer, w, b in zip(net.layers, best_weights, best_biases):
        np.copyto(layer.weights, w)
        np.copyto(layer.biases, b)
    return TrainReport(best_weights, best_biases, history, stopped_epoch,
                       stop_reason, best_epoch, float(best_error))


def write_history_csv(report, path):
    """Dump the per-epoch history as ``epoch,train_loss,valid_error``."""
    lines = ["epoch,train_loss,valid_error"]
    for stats in report.history:
        lines.append(f"{stats.epoch},{stats.train_loss:.6g},"
                     f"{stats.valid_error:.6g}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
