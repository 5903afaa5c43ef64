"""Feed-forward networks whose hidden neurons carry noise sources.

A network is a stack of dense layers. Each layer may own a noise source
(``NoiseSpec``): Gaussian offsets are added to the pre-activation sum,
dropout zeroes the post-activation output of the affected neurons. An
optional input source adds Gaussian offsets to the raw input before the
first layer, which turns an autoencoder into its denoising variant.

Because the noise strengths are fixed rather than learned, a sampled
forward pass leaves an ordinary computation graph behind: backprop
treats the recorded realizations as constants and needs no special
rules. Inference can sample (Monte Carlo mean or majority vote) or use
the deterministic expected pass, where dropout becomes a ``1 - p``
scaling of each neuron's output and Gaussian offsets vanish.
"""
import enum
from dataclasses import dataclass, field

import numpy as np

from noisymlp import kernels, noise
from noisymlp.errors import ConfigError, DataFormatError
from noisymlp.noise import NoiseRealization, NoiseSpec


class ActivationKind(enum.Enum):
    RELU = "relu"
    SIGMOID = "sigmoid"
    TANH = "tanh"
    LINEAR = "linear"

    @property
    def code(self):
        return _KERNEL_CODES[self]

    @property
    def zero_limit(self):
        """Whether the activation tends to 0 as its argument tends to -inf.

        Only such activations can realize dropout as a huge negative
        pre-activation offset, so only they may carry a dropout source.
        """
        return self in (ActivationKind.RELU, ActivationKind.SIGMOID)


_KERNEL_CODES = {
    ActivationKind.RELU: kernels.RELU,
    ActivationKind.SIGMOID: kernels.SIGMOID,
    ActivationKind.TANH: kernels.TANH,
    ActivationKind.LINEAR: kernels.LINEAR,
}


def apply_activation(kind, alpha):
    """Evaluate the activation elementwise (scalars stay scalars)."""
    a = np.asarray(alpha, dtype=np.float64)
    out = kernels.act_forward(kind.code, a)
    return float(out) if np.isscalar(alpha) or a.ndim == 0 else out


def activation_derivative(kind, alpha):
    """Evaluate the activation's derivative elementwise.

    The ReLU derivative at exactly 0 is taken to be 0.
    """
    a = np.asarray(alpha, dtype=np.float64)
    h = kernels.act_forward(kind.code, a)
    out = kernels.act_backward(kind.code, a, h, np.ones_like(a))
    return float(out) if np.isscalar(alpha) or a.ndim == 0 else out


@dataclass
class Layer:
    """One dense layer: weights (fan_in x fan_out), biases, activation,
    and an optional noise source attached to its neurons.

    ``bias_frozen`` pins the biases (at whatever value they hold,
    conventionally zero) so training never updates them.
    """

    weights: np.ndarray
    biases: np.ndarray
    activation: ActivationKind
    noise: NoiseSpec = field(default_factory=NoiseSpec.none)
    bias_frozen: bool = False

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        self.biases = np.ascontiguousarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ConfigError("layer weights must be a 2-D matrix")
        if self.biases.shape != (self.fan_out,):
            raise ConfigError(
                f"bias length {self.biases.shape} does not match fan_out "
                f"{self.fan_out}")
        if not (np.all(np.isfinite(self.weights))
                and np.all(np.isfinite(self.biases))):
            raise ConfigError("layer parameters must be finite")
        self.noise.resolve(self.fan_out)
        if self.noise.kind == noise.DROPOUT and not self.activation.zero_limit:
            raise ConfigError(
                f"dropout requires an activation that vanishes at -inf; "
                f"{self.activation.value} does not")

    @property
    def fan_in(self):
        return self.weights.shape[0]

    @property
    def fan_out(self):
        return self.weights.shape[1]


@dataclass
class Network:
    """A layer stack plus an optional additive input noise source."""

    input_width: int
    layers: list
    input_noise: NoiseSpec = field(default_factory=NoiseSpec.none)

    def __post_init__(self):
        if self.input_width < 1:
            raise ConfigError("input width must be >= 1")
        if not self.layers:
            raise ConfigError("a network needs at least one layer")
        fan_in = self.input_width
        for i, layer in enumerate(self.layers):
            if layer.fan_in != fan_in:
                raise ConfigError(
                    f"layer {i} expects fan_in {layer.fan_in}, but the "
                    f"previous width is {fan_in}")
            fan_in = layer.fan_out
        if self.input_noise.kind == noise.DROPOUT:
            raise ConfigError(
                "input noise is additive; only gaussian or none is allowed")
        self.input_noise.resolve(self.input_width)

    @property
    def output_width(self):
        return self.layers[-1].fan_out


def init_layer(fan_in, fan_out, activation, rng, noise_spec=None,
               bias_frozen=False):
    """A fresh layer with scale-balanced uniform weights and zero biases."""
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    weights = rng.uniform(-bound, bound, size=(fan_in, fan_out))
    return Layer(weights, np.zeros(fan_out), activation,
                 noise_spec or NoiseSpec.none(), bias_frozen)


def build_mlp(input_width, hidden_widths, output_width, rng,
              hidden_activation=ActivationKind.RELU,
              output_activation=ActivationKind.LINEAR,
              hidden_noise=None, input_noise=None, bias_frozen=False):
    """Assemble the standard stack: noisy hidden layers, clean output.

    ``hidden_noise`` is a single spec applied to every hidden layer or
    one spec per hidden layer.
    """
    widths = list(hidden_widths)
    if hidden_noise is None:
        specs = [NoiseSpec.none()] * len(widths)
    elif isinstance(hidden_noise, NoiseSpec):
        specs = [hidden_noise] * len(widths)
    else:
        specs = list(hidden_noise)
        if len(specs) != len(widths):
            raise ConfigError(
                f"{len(specs)} noise specs for {len(widths)} hidden layers")
    layers = []
    fan_in = input_width
    for width, spec in zip(widths, specs):
        layers.append(init_layer(fan_in, width, hidden_activation, rng,
                                 spec, bias_frozen))
        fan_in = width
    layers.append(init_layer(fan_in, output_width, output_activation, rng,
                             bias_frozen=bias_frozen))
    return Network(input_width, layers, input_noise or NoiseSpec.none())


@dataclass
class ForwardTrace:
    """Everything one sampled pass computed, for backprop to consume.

    ``activations`` are post-mask values (dropped neurons hold exact
    zeros); ``pre_activations`` include any sampled Gaussian offsets.
    Arrays are (width,) for a single input or (batch, width) per layer.
    """

    input: np.ndarray
    noisy_input: np.ndarray
    input_realization: NoiseRealization
    pre_activations: list
    activations: list
    realizations: list

    @property
    def output(self):
        return self.activations[-1]

    @property
    def batched(self):
        return self.input.ndim == 2

    def row(self, i):
        """The single-sample trace of row ``i`` of a batched pass."""
        if not self.batched:
            raise ValueError("trace is not batched")
        return ForwardTrace(
            input=self.input[i],
            noisy_input=self.noisy_input[i],
            input_realization=self.input_realization.row(i),
            pre_activations=[a[i] for a in self.pre_activations],
            activations=[h[i] for h in self.activations],
            realizations=[r.row(i) for r in self.realizations],
        )


def _check_input(net, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != net.input_width:
        raise ConfigError(
            f"input of shape {x.shape} does not match input width "
            f"{net.input_width}")
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite values")
    return x


def forward_replayed(net, x, input_realization, realizations):
    """Run a pass with fixed, already-sampled noise realizations.

    This is the deterministic core behind ``forward_sampled`` and the
    replay hook for gradient checking: with the realizations pinned, the
    pass is an ordinary function of the parameters.
    """
    x = _check_input(net, x)
    if len(realizations) != len(net.layers):
        raise ValueError(
            f"{len(realizations)} realizations for {len(net.layers)} layers")
    noisy = x
    if input_realization.kind == noise.GAUSSIAN:
        noisy = x + input_realization.offsets
    pre_acts = []
    acts = []
    h = noisy
    for layer, real in zip(net.layers, realizations):
        alpha = h @ layer.weights + layer.biases
        if real.kind == noise.GAUSSIAN:
            alpha = alpha + real.offsets
        h = kernels.act_forward(layer.activation.code, alpha)
        if real.kind == noise.DROPOUT:
            h = kernels.zero_masked(h, real.mask)
        pre_acts.append(alpha)
        acts.append(h)
    return ForwardTrace(x, noisy, input_realization, pre_acts, acts,
                        list(realizations))


def forward_sampled(net, x, rng):
    """One stochastic pass: sample every noise source, then evaluate.

    Sources are sampled from ``rng`` in a fixed order (input source
    first, then layers bottom-up), so equal generator states reproduce
    the pass bit for bit. ``x`` may be a single input or a (batch, d)
    matrix; batched passes draw independent noise per row.
    """
    x = _check_input(net, x)
    batch = x.shape[0] if x.ndim == 2 else None
    input_real = noise.sample(net.input_noise, net.input_width, rng, batch)
    reals = [noise.sample(layer.noise, layer.fan_out, rng, batch)
             for layer in net.layers]
    return forward_replayed(net, x, input_real, reals)


def forward_expected(net, x):
    """The deterministic pass with every noise source at its mean effect.

    Gaussian sources (input or hidden) contribute exactly nothing;
    dropout scales each affected neuron's output by its retention
    ``1 - p`` before the next layer consumes it.
    """
    x = _check_input(net, x)
    h = x
    for layer in net.layers:
        alpha = h @ layer.weights + layer.biases
        h = kernels.act_forward(layer.activation.code, alpha)
        if layer.noise.kind == noise.DROPOUT:
            effect = noise.expected_contribution(layer.noise, layer.fan_out)
            h = h * effect.values
    return h


@dataclass
class Gradients:
    """Per-layer loss gradients, shaped like the layer parameters."""

    weights: list
    biases: list


def backprop(net, trace, output_gradient):
    """Gradients of the traced pass w.r.t. every weight and bias.

    The recorded noise is held constant: Gaussian offsets are additive
    constants and dropped neurons propagate exactly zero gradient. For a
    batched trace the result is the mean of the per-sample gradients
    (matching a loss averaged over the batch).
    """
    if len(trace.activations) != len(net.layers):
        raise ValueError("trace does not match the network's layer count")
    g = np.asarray(output_gradient, dtype=np.float64)
    if g.shape != trace.output.shape:
        raise ValueError(
            f"output gradient shape {g.shape} does not match trace output "
            f"{trace.output.shape}")
    batched = trace.batched
    n = trace.input.shape[0] if batched else 1
    weight_grads = [None] * len(net.layers)
    bias_grads = [None] * len(net.layers)
    for l in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[l]
        if trace.activations[l].shape[-1] != layer.fan_out:
            raise ValueError(f"trace width mismatch at layer {l}")
        real = trace.realizations[l]
        if real.kind == noise.DROPOUT:
            g = kernels.zero_masked(g, real.mask)
        g = kernels.act_backward(layer.activation.code,
                                 trace.pre_activations[l],
                                 trace.activations[l], g)
        h_prev = trace.activations[l - 1] if l > 0 else trace.noisy_input
        if batched:
            weight_grads[l] = h_prev.T @ g / n
            bias_grads[l] = g.mean(axis=0)
        else:
            weight_grads[l] = np.outer(h_prev, g)
            bias_grads[l] = g.copy()
        if l > 0:
            g = g @ layer.weights.T
    return Gradients(weight_grads, bias_grads)


@dataclass(frozen=True)
class Expected:
    """Deterministic expected-activation inference."""


@dataclass(frozen=True)
class MonteCarlo:
    """Average the outputs of ``n`` sampled passes."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("Monte Carlo needs n >= 1")


@dataclass(frozen=True)
class Majority:
    """Most frequent argmax class over ``n`` sampled passes."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("majority vote needs n >= 1")


def majority_vote(classes):
    """Most frequent entry; ties break toward the lowest class index."""
    counts = np.bincount(np.asarray(classes, dtype=np.intp))
    return int(counts.argmax())


def predict(net, x, strategy, rng=None):
    """Produce the network's prediction under the chosen strategy.

    ``Expected`` returns the deterministic output vector; ``MonteCarlo``
    the elementwise mean over sampled passes; ``Majority`` the winning
    argmax class (an int, or an int array for batched input). Sampled
    strategies require ``rng``.
    """
    if isinstance(strategy, Expected):
        return forward_expected(net, x)
    if rng is None:
        raise ValueError("sampled prediction strategies need an rng")
    if isinstance(strategy, MonteCarlo):
        total = forward_sampled(net, x, rng).output
        for _ in range(strategy.n - 1):
            total = total + forward_sampled(net, x, rng).output
        return total / strategy.n
    if isinstance(strategy, Majority):
        if net.output_width < 2:
            raise ValueError(
                "majority vote needs a classification output (width >= 2)")
        votes = np.stack([
            forward_sampled(net, x, rng).output.argmax(axis=-1)
            for _ in range(strategy.n)
        ])
        if votes.ndim == 1:
            return majority_vote(votes)
        return np.array([majority_vote(votes[:, j])
                         for j in range(votes.shape[1])])
    raise ValueError(f"unknown prediction strategy {strategy!r}")


# Pre-activation offset standing in for a dropped neuron's -inf edge.
DROP_OFFSET = -1e9


def dropout_limit_equivalence(net, x, seed, tol=1e-9):
    """Check that masking equals a huge negative pre-activation offset.

    Samples a pass, then replays it with each dropped neuron receiving
    ``DROP_OFFSET`` added to its pre-activation instead of being masked.
    For activations that vanish at -inf the two outputs must agree; any
    dropout on other activations is refused.
    """
    for i, layer in enumerate(net.layers):
        if layer.noise.kind == noise.DROPOUT and not layer.activation.zero_limit:
            raise ConfigError(
                f"layer {i}: {layer.activation.value} does not vanish at "
                f"-inf, the offset construction does not apply")
    trace = forward_sampled(net, x, np.random.default_rng(seed))
    shifted = []
    for real in trace.realizations:
        if real.kind == noise.DROPOUT:
            offsets = np.where(real.mask, DROP_OFFSET, 0.0)
            shifted.append(NoiseRealization(noise.GAUSSIAN, offsets=offsets))
        else:
            shifted.append(real)
    alt = forward_replayed(net, trace.input, trace.input_realization, shifted)
    return bool(np.max(np.abs(alt.output - trace.output)) <= tol)


def scale_outgoing_weights(net):
    """The deterministic test-time twin of a dropout-trained network.

    Every dropout source is removed and the weights leaving each noisy
    layer are scaled by that layer's per-neuron retention factors; a
    noisy *output* layer must be linear, in which case its own columns
    and biases absorb the scaling. The twin's plain forward pass equals
    ``forward_expected`` of the original.
    """
    weights = [layer.weights.copy() for layer in net.layers]
    biases = [layer.biases.copy() for layer in net.layers]
    for l, layer in enumerate(net.layers):
        if layer.noise.kind != noise.DROPOUT:
            continue
        retention = noise.expected_contribution(layer.noise,
                                                layer.fan_out).values
        if l + 1 < len(net.layers):
            weights[l + 1] = weights[l + 1] * retention[:, None]
        elif layer.activation is ActivationKind.LINEAR:
            weights[l] = weights[l] * retention
            biases[l] = biases[l] * retention
        else:
            raise ConfigError(
                "cannot fold output-layer dropout into nonlinear weights")
    layers = [Layer(w, b, layer.activation, NoiseSpec.none(),
                    layer.bias_frozen)
              for w, b, layer in zip(weights, biases, net.layers)]
    return Network(net.input_width, layers, NoiseSpec.none())


FORMAT_HEADER = "noisymlp-network 1"


def _format_noise(spec):
    if spec.kind == noise.NONE:
        return "none"
    return spec.kind + " " + " ".join(repr(float(v)) for v in spec.values)


def _parse_noise(text):
    parts = text.split()
    kind = parts[0]
    if kind == noise.NONE:
        if len(parts) != 1:
            raise DataFormatError("no-noise spec takes no values")
        return NoiseSpec.none()
    if kind not in (noise.DROPOUT, noise.GAUSSIAN):
        raise DataFormatError(f"unknown noise kind {kind!r}")
    if len(parts) < 2:
        raise DataFormatError(f"{kind} spec needs at least one value")
    values = [float(p) for p in parts[1:]]
    factory = NoiseSpec.dropout if kind == noise.DROPOUT else NoiseSpec.gaussian
    return factory(values)


def save_network(net, path):
    """Write the architecture and parameters as a plain text document.

    Decimal floats are written with ``repr`` so loading reproduces every
    parameter exactly. See README for the line-by-line format.
    """
    lines = [FORMAT_HEADER,
             f"input_width {net.input_width}",
             "input_noise " + _format_noise(net.input_noise),
             f"layers {len(net.layers)}"]
    for i, layer in enumerate(net.layers):
        lines.append(f"layer {i}")
        lines.append(f"fan_in {layer.fan_in}")
        lines.append(f"fan_out {layer.fan_out}")
        lines.append(f"activation {layer.activation.value}")
        lines.append("noise " + _format_noise(layer.noise))
        lines.append(f"bias_frozen {int(layer.bias_frozen)}")
        lines.append("weights")
        for row in layer.weights:
            lines.append(" ".join(repr(float(v)) for v in row))
        lines.append("biases")
        lines.append(" ".join(repr(float(v)) for v in layer.biases))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


class _LineReader:
    def __init__(self, lines):
        self._lines = lines
        self._pos = 0

    def next(self, context):
        if self._pos >= len(self._lines):
            raise DataFormatError(f"network file truncated: expected {context}")
        line = self._lines[self._pos]
        self._pos += 1
        return line

    def expect_field(self, name):
        line = self.next(name)
        if not line.startswith(name + " "):
            raise DataFormatError(f"expected {name!r} line, got {line!r}")
        return line[len(name) + 1:]


def load_network(path):
    """Read a network saved by ``save_network``."""
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    reader = _LineReader(lines)
    header = reader.next("header")
    if header != FORMAT_HEADER:
        raise DataFormatError(
            f"unsupported network file header {header!r} "
            f"(expected {FORMAT_HEADER!r})")
    input_width = int(reader.expect_field("input_width"))
    input_noise = _parse_noise(reader.expect_field("input_noise"))
    n_layers = int(reader.expect_field("layers"))
    layers = []
    for i in range(n_layers):
        idx = int(reader.expect_field("layer"))
        if idx != i:
            raise DataFormatError(f"expected layer {i}, found layer {idx}")
        fan_in = int(reader.expect_field("fan_in"))
        fan_out = int(reader.expect_field("fan_out"))
        act = ActivationKind(reader.expect_field("activation"))
        spec = _parse_noise(reader.expect_field("noise"))
        bias_frozen = bool(int(reader.expect_field("bias_frozen")))
        if reader.next("weights") != "weights":
            raise DataFormatError("expected 'weights' line")
        rows = []
        for _ in range(fan_in):
            row = [float(v) for v in reader.next("weight row").split()]
            if len(row) != fan_out:
                raise DataFormatError(
                    f"weight row of length {len(row)}, expected {fan_out}")
            rows.append(row)
        if reader.next("biases") != "biases":
            raise DataFormatError("expected 'biases' line")
        biases = [float(v) for v in reader.next("bias row").split()]
        if len(biases) != fan_out:
            raise DataFormatError(
                f"bias row of length {len(biases)}, expected {fan_out}")
        layers.append(Layer(np.array(rows), np.array(biases), act, spec,
                            bias_frozen))
    return Network(input_width, layers, input_noise)
