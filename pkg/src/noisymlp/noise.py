"""Per-neuron noise sources with fixed, non-learned strengths.

A layer's noise source is one of three kinds: ``none``, ``dropout``
(each neuron's output is forced to zero with its own probability), or
``gaussian`` (a zero-mean offset with per-neuron standard deviation is
added to the pre-activation). Sampling happens once per forward pass;
at inference time each source is replaced by its mean effect: a
multiplicative retention factor ``1 - p`` for dropout and an additive
zero for Gaussian offsets.
"""
from dataclasses import dataclass

import numpy as np

from noisymlp.errors import ConfigError

NONE = "none"
DROPOUT = "dropout"
GAUSSIAN = "gaussian"

KINDS = (NONE, DROPOUT, GAUSSIAN)


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    """Declares a layer's noise source.

    ``values`` holds the per-neuron dropping probabilities (dropout) or
    standard deviations (gaussian); a length-1 array broadcasts over the
    owning layer. ``None``-kind specs carry no values.
    """

    kind: str
    values: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown noise kind {self.kind!r}")
        if self.kind == NONE:
            if self.values is not None:
                raise ConfigError("no-noise spec takes no values")
            return
        vals = np.atleast_1d(np.asarray(self.values, dtype=np.float64))
        if vals.ndim != 1 or vals.size < 1:
            raise ConfigError("noise values must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(vals)):
            raise ConfigError("noise values must be finite")
        if self.kind == DROPOUT and (np.any(vals < 0.0) or np.any(vals > 1.0)):
            raise ConfigError("dropping probabilities must lie in [0, 1]")
        if self.kind == GAUSSIAN and np.any(vals < 0.0):
            raise ConfigError("noise standard deviations must be >= 0")
        object.__setattr__(self, "values", vals)

    @classmethod
    def none(cls):
        return cls(NONE)

    @classmethod
    def dropout(cls, probs):
        return cls(DROPOUT, np.asarray(probs, dtype=np.float64))

    @classmethod
    def gaussian(cls, stds):
        return cls(GAUSSIAN, np.asarray(stds, dtype=np.float64))

    def resolve(self, width):
        """Broadcast the value sequence to a given layer width."""
        if self.kind == NONE:
            return None
        if self.values.size == width:
            return self.values
        if self.values.size == 1:
            return np.broadcast_to(self.values, (width,))
        raise ConfigError(
            f"noise spec of length {self.values.size} does not broadcast "
            f"to layer width {width}")

    def matches(self, other):
        """Structural equality (used by tests and serialization)."""
        if not isinstance(other, NoiseSpec) or self.kind != other.kind:
            return False
        if self.kind == NONE:
            return True
        return np.array_equal(self.values, other.values)


@dataclass(frozen=True, eq=False)
class NoiseRealization:
    """One sampled draw of a noise source.

    ``mask`` (dropout) marks dropped neurons with True; ``offsets``
    (gaussian) holds the sampled additive values. Arrays have the layer
    width as their last dimension and an optional leading batch axis.
    """

    kind: str
    mask: np.ndarray | None = None
    offsets: np.ndarray | None = None

    def row(self, i):
        """The realization of sample ``i`` out of a batched draw."""
        if self.kind == DROPOUT:
            return NoiseRealization(DROPOUT, mask=self.mask[i])
        if self.kind == GAUSSIAN:
            return NoiseRealization(GAUSSIAN, offsets=self.offsets[i])
        return self


@dataclass(frozen=True, eq=False)
class ExpectedEffect:
    """Mean effect of a noise source: a retention scale or an offset."""

    kind: str  # "multiplicative" | "additive"
    values: np.ndarray


def sample(spec, width, rng, batch=None):
    """Draw one realization of ``spec`` for a layer of ``width`` neurons.

    ``rng`` is a ``numpy.random.Generator``; equal generator states give
    bit-identical realizations. ``batch`` adds a leading axis of
    independent per-sample draws.
    """
    if width < 1:
        raise ConfigError("layer width must be >= 1")
    shape = (width,) if batch is None else (batch, width)
    if spec.kind == NONE:
        return NoiseRealization(NONE)
    params = spec.resolve(width)
    if spec.kind == DROPOUT:
        # Drawing uniforms for every neuron keeps scalar and per-neuron
        # specs on the same stream, so broadcasting cannot change a draw.
        mask = rng.random(shape) < params
        return NoiseRealization(DROPOUT, mask=mask)
    offsets = rng.standard_normal(shape) * params
    return NoiseRealization(GAUSSIAN, offsets=offsets)


def expected_contribution(spec, width):
    """Replace a noise source by its mean effect.

    Dropout yields per-neuron retention factors ``1 - p``; Gaussian
    offsets are zero-mean and vanish; no noise keeps everything as is.
    """
    if spec.kind == DROPOUT:
        return ExpectedEffect("multiplicative", 1.0 - spec.resolve(width))
    if spec.kind == GAUSSIAN:
        return ExpectedEffect("additive", np.zeros(width))
    return ExpectedEffect("multiplicative", np.ones(width))
