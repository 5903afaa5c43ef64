"""Exception taxonomy shared across the package.

Three families matter to callers (and to the CLI exit codes): bad
configuration or wiring, bad data on disk, and numerical failure during
training. Plain ``ValueError`` is used for ordinary bad arguments.
"""


class ConfigError(ValueError):
    """Invalid configuration: shapes, specs, ranges or config files."""


class DataFormatError(ValueError):
    """A data file does not match its declared byte format."""


class TrainingError(RuntimeError):
    """Training aborted: non-finite loss or gradients."""
