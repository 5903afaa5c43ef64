"""Command-line entry point.

Subcommands: ``train`` (one configured run), ``sweep-dropout`` and
``sweep-noise`` (randomized hyperparameter sweeps), ``interpolate``
(records CSV to dense grid CSV), and ``eval`` (error of a saved model
on a dataset). Flags override config-file values.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 training failure (train subcommand only).
"""
import argparse
import sys

import numpy as np

from noisymlp import experiment
from noisymlp.errors import ConfigError, DataFormatError, TrainingError
from noisymlp.network import Expected, load_network, predict, save_network
from noisymlp.training import (LossKind, evaluate_error, train,
                               write_history_csv)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="noisymlp",
        description="Train and sweep feed-forward nets with per-neuron "
                    "noise sources (dropout / additive Gaussian).")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, trials=False, resolution=False):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--out", help="output CSV path")
        p.add_argument("--seed", type=int, help="override base_seed")
        p.add_argument("--subsample", type=int,
                       help="cap on training-pool samples")
        if trials:
            p.add_argument("--trials", type=int, help="number of trials")
        if resolution:
            p.add_argument("--resolution", type=int, default=50,
                           help="grid resolution per axis (default 50)")

    p_train = sub.add_parser("train", help="run one configured training")
    common(p_train)
    p_train.add_argument("--model-out", help="save the trained network here")

    for name, mode in (("sweep-dropout", experiment.DROPOUT_GRID),
                       ("sweep-noise", experiment.NOISE_GRID)):
        p_sweep = sub.add_parser(
            name, help=f"randomized {mode.split('-')[0]} sweep")
        common(p_sweep, trials=True)
        p_sweep.set_defaults(mode=mode)

    p_interp = sub.add_parser("interpolate",
                              help="records CSV -> dense error grid CSV")
    common(p_interp, resolution=True)
    p_interp.add_argument("--records", required=True,
                          help="sweep records CSV to interpolate")

    p_eval = sub.add_parser("eval", help="test error of a saved model")
    common(p_eval)
    p_eval.add_argument("--model", required=True,
                        help="network file saved by train --model-out")
    return parser


def _load_config(args, forced_mode=None):
    if args.config:
        config = experiment.load_config_file(args.config)
    else:
        config = experiment.ExperimentConfig()
    if forced_mode:
        config.mode = forced_mode
    if args.seed is not None:
        config.base_seed = args.seed
    if args.subsample is not None:
        config.subsample = args.subsample
    if getattr(args, "trials", None) is not None:
        config.trials = args.trials
    # Re-run validation with the overrides applied.
    config.__post_init__()
    return config


def _cmd_train(args):
    config = _load_config(args, forced_mode=experiment.SINGLE)
    pool, test = experiment.load_experiment_data(config)
    net, train_config, _, _ = experiment.prepare_trial(config, 0, pool)
    report = train(net, pool, train_config)
    test_error = evaluate_error(net, test, LossKind.SOFTMAX_CROSS_ENTROPY)
    print(f"stopped after epoch {report.stopped_epoch} "
          f"({report.stop_reason}), best epoch {report.best_epoch}")
    print(f"valid_error {report.best_valid_error:.6g}")
    print(f"test_error {test_error:.6g}")
    if args.out:
        write_history_csv(report, args.out)
        print(f"history written to {args.out}")
    if args.model_out:
        save_network(net, args.model_out)
        print(f"model written to {args.model_out}")
    return 0


def _cmd_sweep(args):
    config = _load_config(args, forced_mode=args.mode)
    if not args.out:
        raise ConfigError("--out is required for sweeps")
    records = experiment.run_experiment(config)
    experiment.write_records_csv(records, args.out)
    finished = sum(1 for r in records if not r.failed)
    print(f"{len(records)} trials ({len(records) - finished} failed), "
          f"records written to {args.out}")
    return 0


def _cmd_interpolate(args):
    records = experiment.read_records_csv(args.records)
    ranges = None
    if args.config:
        config = experiment.load_config_file(args.config)
        which = (config.p_ranges if config.mode == experiment.DROPOUT_GRID
                 else config.s_ranges)
        ranges = (which[0], which[1] if len(which) > 1 else which[0])
    if not args.out:
        raise ConfigError("--out is required for interpolate")
    grid = experiment.interpolate_grid(records, args.resolution, ranges)
    experiment.write_grid_csv(grid, args.out)
    print(f"{grid.shape[0]} grid rows written to {args.out}")
    return 0


def _cmd_eval(args):
    net = load_network(args.model)
    config = _load_config(args)
    if config.synthetic is None and not (config.test_images
                                         and config.test_labels):
        raise ConfigError("eval needs test dataset paths or a synthetic "
                          "spec in the config")
    _, test = experiment.load_experiment_data(config)
    outputs = predict(net, test.inputs, Expected())
    error = float(np.mean(outputs.argmax(axis=1) != test.labels))
    print(f"test_error {error:.6g} ({len(test)} samples)")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "sweep-dropout": _cmd_sweep,
    "sweep-noise": _cmd_sweep,
    "interpolate": _cmd_interpolate,
    "eval": _cmd_eval,
}


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses exit code 2 for usage errors; remap per contract.
        return 0 if exc.code == 0 else 1
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (DataFormatError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except TrainingError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
