"""Hyperparameter sweep harness: per-trial sampling, records, grids.

A sweep trains one fresh classifier per trial. Dropout sweeps draw a
dropping probability per hidden layer uniformly from a configured
range; noise sweeps draw the exponent s of a noise standard deviation
10**s the same way. Each trial gets deterministic seed material derived
from (base_seed, trial index), so a sweep is reproducible record for
record. Results land in a flat CSV; a simple inverse-distance-weighted
interpolator turns the scattered (param1, param2, error) points into a
dense grid for external contour plotting.
"""
import time
from dataclasses import dataclass, field, replace

import numpy as np

from noisymlp import data as data_mod
from noisymlp.errors import ConfigError, TrainingError
from noisymlp.network import ActivationKind, build_mlp
from noisymlp.noise import NoiseSpec
from noisymlp.training import LossKind, TrainConfig, evaluate_error, train

SINGLE = "single"
DROPOUT_GRID = "dropout-grid"
NOISE_GRID = "noise-grid"

MODES = (SINGLE, DROPOUT_GRID, NOISE_GRID)


@dataclass
class ExperimentConfig:
    """Everything one sweep needs; every field has a config-file key."""

    mode: str = SINGLE
    trials: int = 25
    layer_widths: tuple = (256, 256)
    hidden_activation: ActivationKind = ActivationKind.RELU
    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    synthetic: str | None = None
    synthetic_n: int = 2000
    synthetic_noise: float = 0.05
    subsample: int | None = 6000
    train: TrainConfig = field(default_factory=TrainConfig)
    base_seed: int = 0
    p_ranges: tuple | None = None
    s_ranges: tuple | None = None
    noise_kind: str = "none"
    noise_params: tuple = ()
    freeze_biases: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.base_seed < 0:
            raise ConfigError("base_seed must be >= 0")
        self.layer_widths = tuple(int(w) for w in self.layer_widths)
        if not self.layer_widths or any(w < 1 for w in self.layer_widths):
            raise ConfigError("layer widths must all be >= 1")
        self.p_ranges = self._resolve_ranges(self.p_ranges, (0.0, 1.0), "p")
        self.s_ranges = self._resolve_ranges(self.s_ranges, (-5.0, 0.0), "s")
        if self.noise_kind not in ("none", "dropout", "gaussian"):
            raise ConfigError(f"unknown noise kind {self.noise_kind!r}")
        self.noise_params = tuple(float(v) for v in self.noise_params)
        if self.noise_params and len(self.noise_params) != self.n_hidden:
            raise ConfigError(
                f"{len(self.noise_params)} noise params for "
                f"{self.n_hidden} hidden layers")

    @property
    def n_hidden(self):
        return len(self.layer_widths)

    def _resolve_ranges(self, ranges, default, name):
        if ranges is None:
            ranges = (default,) * self.n_hidden
        ranges = tuple(tuple(float(v) for v in r) for r in ranges)
        if len(ranges) == 1 and self.n_hidden > 1:
            ranges = ranges * self.n_hidden
        if len(ranges) != self.n_hidden:
            raise ConfigError(
                f"{len(ranges)} {name}-ranges for {self.n_hidden} layers")
        for lo, hi in ranges:
            if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
                raise ConfigError(f"{name}-range [{lo}, {hi}] is not ordered")
        return ranges


@dataclass
class TrialRecord:
    """One sweep entry: sampled hyperparameters and resulting errors."""

    trial: int
    params: tuple
    seed: int
    valid_error: float
    test_error: float
    stopped_epoch: int
    wall_time: float
    failed: bool = False


def _trial_stream(config, trial_index, role):
    seq = np.random.SeedSequence(entropy=config.base_seed,
                                 spawn_key=(trial_index, role))
    return np.random.default_rng(seq)


def _trial_seed(config, trial_index):
    seq = np.random.SeedSequence(entropy=config.base_seed,
                                 spawn_key=(trial_index, 1))
    return int(seq.generate_state(1)[0])


def sample_trial_hyperparams(config, trial_index):
    """Per-hidden-layer hyperparameter draw for one trial.

    Uniform on the configured per-layer range, from a stream determined
    by (base_seed, trial index): dropping probabilities for dropout
    sweeps, standard-deviation exponents for noise sweeps.
    """
    ranges = (config.p_ranges if config.mode == DROPOUT_GRID
              else config.s_ranges)
    rng = _trial_stream(config, trial_index, 0)
    return tuple(float(rng.uniform(lo, hi)) for lo, hi in ranges)


def _noise_specs(config, params):
    if config.mode == DROPOUT_GRID:
        return [NoiseSpec.dropout(p) for p in params]
    if config.mode == NOISE_GRID:
        return [NoiseSpec.gaussian(10.0 ** s) for s in params]
    if config.noise_kind == "none":
        return None
    values = config.noise_params or (0.0,) * config.n_hidden
    if config.noise_kind == "dropout":
        return [NoiseSpec.dropout(p) for p in values]
    return [NoiseSpec.gaussian(u) for u in values]


def load_experiment_data(config):
    """The (train pool, test set) pair a sweep runs on.

    Either IDX file pairs from the config paths or a synthetic dataset;
    the train pool is subsampled (seeded) when ``subsample`` caps it.
    """
    if config.synthetic is not None:
        gen_seed = np.random.SeedSequence(entropy=config.base_seed,
                                          spawn_key=(0, 100))
        test_seed = np.random.SeedSequence(entropy=config.base_seed,
                                           spawn_key=(0, 101))
        n_test = max(4, (config.synthetic_n // 4) // 2 * 2)
        pool = data_mod.make_synthetic(config.synthetic, config.synthetic_n,
                                       config.synthetic_noise, gen_seed)
        test = data_mod.make_synthetic(config.synthetic, n_test,
                                       config.synthetic_noise, test_seed)
    elif config.train_images and config.train_labels:
        pool = data_mod.load_idx_dataset(config.train_images,
                                         config.train_labels)
        if not (config.test_images and config.test_labels):
            raise ConfigError("test_images and test_labels are required")
        test = data_mod.load_idx_dataset(config.test_images,
                                         config.test_labels)
    else:
        raise ConfigError(
            "configure either IDX dataset paths or a synthetic dataset")
    if config.subsample is not None and config.subsample < len(pool):
        rng = _trial_stream(config, 0, 102)
        keep = rng.permutation(len(pool))[:config.subsample]
        pool = pool.subset(keep)
    return pool, test


def prepare_trial(config, trial_index, pool):
    """Fresh network, train config and recorded hyperparameters for a trial.

    All seed material is a deterministic function of (base_seed, trial
    index), so preparing the same trial twice gives identical networks.
    """
    if config.mode == SINGLE:
        params = config.noise_params or (0.0,) * config.n_hidden
    else:
        params = sample_trial_hyperparams(config, trial_index)
    seed = _trial_seed(config, trial_index)
    init_rng = _trial_stream(config, trial_index, 2)
    net = build_mlp(pool.d, config.layer_widths, pool.num_classes, init_rng,
                    hidden_activation=config.hidden_activation,
                    hidden_noise=_noise_specs(config, params),
                    bias_frozen=config.freeze_biases)
    return net, replace(config.train, seed=seed), params, seed


def run_trial(config, trial_index, pool, test, collect_timing=True):
    """Train one fresh network for one trial and record the outcome."""
    net, train_config, params, seed = prepare_trial(config, trial_index, pool)
    started = time.perf_counter()
    try:
        report = train(net, pool, train_config)
        test_error = evaluate_error(net, test, LossKind.SOFTMAX_CROSS_ENTROPY)
    except (TrainingError, FloatingPointError):
        elapsed = time.perf_counter() - started if collect_timing else 0.0
        return TrialRecord(trial_index, params, seed, float("nan"),
                           float("nan"), 0, elapsed, failed=True)
    elapsed = time.perf_counter() - started if collect_timing else 0.0
    return TrialRecord(trial_index, params, seed, report.best_valid_error,
                       test_error, report.stopped_epoch, elapsed)


def run_experiment(config, datasets=None, collect_timing=True):
    """Run every trial of the configured sweep and collect the records.

    A trial that fails numerically is recorded with NaN errors and the
    sweep continues. ``datasets`` may inject a prepared (pool, test)
    pair; ``collect_timing=False`` zeroes the wall_time column so two
    runs of the same config emit byte-identical CSVs.
    """
    if config.train.loss is not LossKind.SOFTMAX_CROSS_ENTROPY:
        raise ConfigError("sweeps train classifiers; use loss = xent")
    pool, test = datasets if datasets is not None else \
        load_experiment_data(config)
    if pool.labels is None or test.labels is None:
        raise ConfigError("sweeps need labeled datasets")
    n_trials = 1 if config.mode == SINGLE else config.trials
    return [run_trial(config, i, pool, test, collect_timing)
            for i in range(n_trials)]


def write_records_csv(records, path):
    """Write sweep records with the flat schema
    ``trial,param1,...,valid_error,test_error,stopped_epoch,seed,wall_time``.

    Floats carry 6 significant digits. Refuses an empty record list.
    """
    if not records:
        raise ValueError("no records to write")
    n_params = len(records[0].params)
    param_cols = ",".join(f"param{i + 1}" for i in range(n_params))
    lines = [f"trial,{param_cols},valid_error,test_error,stopped_epoch,"
             f"seed,wall_time"]
    for rec in records:
        if len(rec.params) != n_params:
            raise ValueError("records disagree on the parameter count")
        params = ",".join(f"{p:.6g}" for p in rec.params)
        lines.append(f"{rec.trial},{params},{rec.valid_error:.6g},"
                     f"{rec.test_error:.6g},{rec.stopped_epoch},{rec.seed},"
                     f"{rec.wall_time:.6g}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def read_records_csv(path):
    """Reparse a records CSV written by ``write_records_csv``."""
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty records file")
    header = lines[0].split(",")
    if header[0] != "trial" or header[-1] != "wall_time":
        raise ValueError(f"{path}: unrecognized records header")
    n_params = sum(1 for col in header if col.startswith("param"))
    records = []
    for line in lines[1:]:
        cells = line.split(",")
        if len(cells) != len(header):
            raise ValueError(f"{path}: row has {len(cells)} cells, "
                             f"expected {len(header)}")
        params = tuple(float(c) for c in cells[1:1 + n_params])
        valid_error, test_error = (float(cells[1 + n_params]),
                                   float(cells[2 + n_params]))
        records.append(TrialRecord(
            trial=int(cells[0]),
            params=params,
            seed=int(cells[4 + n_params]),
            valid_error=valid_error,
            test_error=test_error,
            stopped_epoch=int(cells[3 + n_params]),
            wall_time=float(cells[5 + n_params]),
            failed=not (np.isfinite(valid_error) and np.isfinite(test_error)),
        ))
    return records


# A grid node closer than this to a sample point takes its value exactly.
COINCIDENCE_DISTANCE = 1e-12


def interpolate_grid(records, resolution, ranges=None, min_points=3):
    """Inverse-distance-weighted (power 2) interpolation onto a grid.

    Returns (resolution**2, 3) rows of (param1, param2, error) spanning
    ``ranges`` (default: the records' bounding box), suitable for any
    contour plotter. Failed (NaN) records are skipped. ``min_points``
    exists as a test hook; the operational minimum is 3 distinct points.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    usable = [r for r in records if not r.failed]
    if any(len(r.params) != 2 for r in usable):
        raise ValueError("grid interpolation expects exactly 2 parameters")
    points = np.array([r.params for r in usable], dtype=np.float64)
    errors = np.array([r.test_error for r in usable], dtype=np.float64)
    distinct = {tuple(p) for p in points}
    if len(distinct) < min_points:
        raise ValueError(
            f"need at least {min_points} distinct sample points, "
            f"got {len(distinct)}")
    if ranges is None:
        ranges = ((points[:, 0].min(), points[:, 0].max()),
                  (points[:, 1].min(), points[:, 1].max()))
    axis1 = np.linspace(ranges[0][0], ranges[0][1], resolution)
    axis2 = np.linspace(ranges[1][0], ranges[1][1], resolution)
    rows = np.empty((resolution * resolution, 3))
    k = 0
    for x1 in axis1:
        d1 = points[:, 0] - x1
        for x2 in axis2:
            d2 = points[:, 1] - x2
            dist_sq = d1 * d1 + d2 * d2
            nearest = int(dist_sq.argmin())
            if dist_sq[nearest] < COINCIDENCE_DISTANCE ** 2:
                value = errors[nearest]
            else:
                weights = 1.0 / dist_sq
                value = (weights * errors).sum() / weights.sum()
            rows[k] = (x1, x2, value)
            k += 1
    return rows


def write_grid_csv(grid_rows, path):
    """Write interpolated grid rows as ``param1,param2,error``."""
    lines = ["param1,param2,error"]
    for x1, x2, err in grid_rows:
        lines.append(f"{x1:.10g},{x2:.10g},{err:.10g}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


_BOOL_KEYS = {"freeze_biases"}
_INT_KEYS = {"trials", "synthetic_n", "subsample", "base_seed", "batch_size",
             "max_epochs", "patience", "seed"}
_FLOAT_KEYS = {"synthetic_noise", "rho", "epsilon"}
_PATH_KEYS = {"train_images", "train_labels", "test_images", "test_labels"}


def parse_config_text(text):
    """Parse ``key = value`` lines (with # comments) into a dict."""
    mapping = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value")
        mapping[key] = value
    return mapping


def _parse_range(value):
    parts = [float(v) for v in value.split(",")]
    if len(parts) != 2:
        raise ConfigError(f"a range needs two values, got {value!r}")
    if parts[0] > parts[1]:
        raise ConfigError(f"range [{value}] is not ordered low,high")
    return tuple(parts)


def config_from_mapping(mapping):
    """Build an ExperimentConfig from config-file (or override) keys."""
    mapping = dict(mapping)
    train_kwargs = {}
    exp_kwargs = {}
    range_overrides = {"p": {}, "s": {}}
    for key, value in mapping.items():
        if key in ("batch_size", "max_epochs", "patience", "seed"):
            train_kwargs[key] = int(value)
        elif key in ("rho", "epsilon"):
            train_kwargs[key] = float(value)
        elif key == "loss":
            train_kwargs["loss"] = LossKind(value)
        elif key == "split_ratio":
            parts = value.split(":")
            if len(parts) != 2:
                raise ConfigError(f"split_ratio must look like 3:1, "
                                  f"got {value!r}")
            train_kwargs["split_ratio"] = (int(parts[0]), int(parts[1]))
        elif key == "mode":
            exp_kwargs["mode"] = value
        elif key == "layer_widths":
            exp_kwargs["layer_widths"] = tuple(
                int(v) for v in value.split(","))
        elif key == "hidden_activation":
            exp_kwargs["hidden_activation"] = ActivationKind(value)
        elif key == "synthetic":
            exp_kwargs["synthetic"] = value
        elif key in _PATH_KEYS:
            exp_kwargs[key] = value
        elif key in _BOOL_KEYS:
            exp_kwargs[key] = value.lower() in ("1", "true", "yes")
        elif key in _INT_KEYS - {"batch_size", "max_epochs", "patience",
                                 "seed"}:
            exp_kwargs[key] = int(value)
        elif key in _FLOAT_KEYS - {"rho", "epsilon"}:
            exp_kwargs[key] = float(value)
        elif key == "noise_kind":
            exp_kwargs["noise_kind"] = value
        elif key == "noise_params":
            exp_kwargs["noise_params"] = tuple(
                float(v) for v in value.split(","))
        elif key in ("p_range", "s_range"):
            exp_kwargs[key[0] + "_ranges"] = (_parse_range(value),)
        elif key[:-1] in ("p_range", "s_range") and key[-1].isdigit():
            range_overrides[key[0]][int(key[-1])] = _parse_range(value)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    try:
        config = ExperimentConfig(train=TrainConfig(**train_kwargs),
                                  **exp_kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    for which, overrides in range_overrides.items():
        if not overrides:
            continue
        attr = which + "_ranges"
        ranges = list(getattr(config, attr))
        for layer_no, rng in overrides.items():
            if not 1 <= layer_no <= len(ranges):
                raise ConfigError(
                    f"{which}_range{layer_no}: no hidden layer {layer_no}")
            ranges[layer_no - 1] = rng
        setattr(config, attr, tuple(ranges))
    return config


def load_config_file(path):
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_mapping(parse_config_text(fh.read()))
