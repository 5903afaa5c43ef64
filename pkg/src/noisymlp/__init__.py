"""Feed-forward networks with fixed-strength per-neuron noise sources.

One mechanism covers dropout (per-neuron or per-layer dropping
probabilities), additive Gaussian pre-activation noise, denoising input
corruption, and noisy sigmoid bottlenecks: every noise source is an
independent draw with a fixed, non-learned strength, so plain
backpropagation trains the network and the deterministic expected pass
(retention-scaled dropout, vanished Gaussian offsets) serves inference.
"""
from noisymlp.data import Dataset, load_idx_dataset, load_idx_images, \
    load_idx_labels, make_synthetic, write_idx_images, write_idx_labels
from noisymlp.errors import ConfigError, DataFormatError, TrainingError
from noisymlp.experiment import ExperimentConfig, TrialRecord, \
    interpolate_grid, read_records_csv, run_experiment, \
    sample_trial_hyperparams, write_records_csv
from noisymlp.kernels import BACKEND
from noisymlp.network import ActivationKind, Expected, ForwardTrace, \
    Gradients, Layer, Majority, MonteCarlo, Network, apply_activation, \
    backprop, build_mlp, dropout_limit_equivalence, forward_expected, \
    forward_replayed, forward_sampled, init_layer, load_network, \
    majority_vote, predict, save_network, scale_outgoing_weights
from noisymlp.noise import ExpectedEffect, NoiseRealization, NoiseSpec, \
    expected_contribution, sample
from noisymlp.training import AdadeltaState, LossKind, TrainConfig, \
    TrainReport, adadelta_step, evaluate_error, loss_and_gradient, softmax, \
    split_dataset, train, write_history_csv

__version__ = "0.1.0"
