"""Dataset container, IDX file I/O, and synthetic desk-scale datasets.

The IDX loaders follow the big-endian container used by the classic
handwritten-digit files: images carry magic 0x00000803 followed by
counts (n, rows, cols) and n*rows*cols unsigned bytes; labels carry
magic 0x00000801, a count, and n unsigned bytes. Pixels are scaled to
[0, 1] by dividing by 255. Matching writers exist so tests and tools
can fabricate byte-exact files.
"""
import struct
import warnings
from dataclasses import dataclass

import numpy as np

from noisymlp.errors import DataFormatError

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

TWO_GAUSSIANS = "two-gaussians"
XOR = "xor"


@dataclass
class Dataset:
    """Inputs in [0, 1] with optional integer class labels.

    ``labels is None`` marks reconstruction (autoencoder) use, where the
    inputs double as targets.
    """

    inputs: np.ndarray
    labels: np.ndarray | None = None
    num_classes: int | None = None

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        if self.inputs.ndim != 2 or self.inputs.shape[0] == 0:
            raise ValueError("inputs must be a non-empty (n, d) matrix")
        if not np.all(np.isfinite(self.inputs)):
            raise ValueError("inputs must be finite")
        if self.inputs.min() < 0.0 or self.inputs.max() > 1.0:
            raise ValueError("inputs must lie in [0, 1]")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.intp)
            if self.labels.shape != (len(self),):
                raise ValueError("one label per sample is required")
            if self.num_classes is None:
                self.num_classes = int(self.labels.max()) + 1
            if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
                raise ValueError(
                    f"labels must lie in [0, {self.num_classes})")

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def d(self):
        return self.inputs.shape[1]

    def subset(self, indices):
        labels = None if self.labels is None else self.labels[indices]
        return Dataset(self.inputs[indices], labels, self.num_classes)


def _read_be32(fh, path, what):
    raw = fh.read(4)
    if len(raw) < 4:
        raise DataFormatError(f"{path}: truncated header, missing {what}")
    return struct.unpack(">I", raw)[0]


def load_idx_images(path):
    """Parse an IDX image file into an (n, rows*cols) matrix in [0, 1]."""
    with open(path, "rb") as fh:
        magic = _read_be32(fh, path, "magic")
        if magic != IMAGE_MAGIC:
            raise DataFormatError(
                f"{path}: magic 0x{magic:08x} is not an image file "
                f"(expected 0x{IMAGE_MAGIC:08x})")
        n = _read_be32(fh, path, "item count")
        rows = _read_be32(fh, path, "row count")
        cols = _read_be32(fh, path, "column count")
        payload = fh.read()
    expected = n * rows * cols
    if len(payload) != expected:
        raise DataFormatError(
            f"{path}: payload holds {len(payload)} bytes, expected "
            f"{expected} ({n} x {rows} x {cols})")
    pixels = np.frombuffer(payload, dtype=np.uint8).astype(np.float64)
    return pixels.reshape(n, rows * cols) / 255.0


def load_idx_labels(path):
    """Parse an IDX label file into an integer vector."""
    with open(path, "rb") as fh:
        magic = _read_be32(fh, path, "magic")
        if magic != LABEL_MAGIC:
            raise DataFormatError(
                f"{path}: magic 0x{magic:08x} is not a label file "
                f"(expected 0x{LABEL_MAGIC:08x})")
        n = _read_be32(fh, path, "item count")
        payload = fh.read()
    if len(payload) != n:
        raise DataFormatError(
            f"{path}: payload holds {len(payload)} bytes, expected {n}")
    return np.frombuffer(payload, dtype=np.uint8).astype(np.intp)


def write_idx_images(path, images):
    """Write a uint8 (n, rows, cols) tensor in the IDX image layout."""
    images = np.ascontiguousarray(images, dtype=np.uint8)
    if images.ndim != 3:
        raise ValueError("images must be a (n, rows, cols) uint8 tensor")
    n, rows, cols = images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IMAGE_MAGIC, n, rows, cols))
        fh.write(images.tobytes())


def write_idx_labels(path, labels):
    """Write an integer vector in the IDX label layout."""
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ValueError("labels must be a 1-D vector")
    if labels.size and (labels.min() < 0 or labels.max() > 255):
        raise ValueError("labels must fit in an unsigned byte")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", LABEL_MAGIC, labels.size))
        fh.write(labels.astype(np.uint8).tobytes())


def load_idx_dataset(images_path, labels_path, num_classes=10):
    """Load an image/label file pair into a classification Dataset."""
    inputs = load_idx_images(images_path)
    labels = load_idx_labels(labels_path)
    if inputs.shape[0] != labels.shape[0]:
        raise DataFormatError(
            f"{inputs.shape[0]} images but {labels.shape[0]} labels")
    if labels.size and labels.max() >= num_classes:
        warnings.warn(
            f"labels reach {int(labels.max())}, beyond the declared "
            f"{num_classes} classes", stacklevel=2)
        num_classes = int(labels.max()) + 1
    return Dataset(inputs, labels, num_classes)


def make_synthetic(kind, n, noise_std, seed):
    """Generate a small 2-D classification dataset.

    ``two-gaussians``: one isotropic blob per class at (0.25, 0.25) and
    (0.75, 0.75). ``xor``: four blobs at the corners of [0.2, 0.8]^2,
    class 0 where the corner coordinates agree. Points are clipped to
    the unit square; classes are balanced.
    """
    if n < 4 or n % 2:
        raise ValueError("n must be even and >= 4")
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    rng = np.random.default_rng(seed)
    if kind == TWO_GAUSSIANS:
        centers = np.array([[0.25, 0.25], [0.75, 0.75]])
        labels = np.arange(n) % 2
        means = centers[labels]
    elif kind == XOR:
        # Corner order alternates classes so any even n stays balanced.
        corners = np.array([[0.2, 0.2], [0.2, 0.8], [0.8, 0.8], [0.8, 0.2]])
        corner_idx = np.arange(n) % 4
        labels = corner_idx % 2
        means = corners[corner_idx]
    else:
        raise ValueError(f"unknown synthetic kind {kind!r}")
    points = means + noise_std * rng.standard_normal((n, 2))
    np.clip(points, 0.0, 1.0, out=points)
    order = rng.permutation(n)
    return Dataset(points[order], labels[order], 2)
