"""Shared fixtures.

The acceptance tests train on real handwritten digits. When the four
classic IDX files are available (point NOISYMLP_MNIST_DIR at them) they
are used directly; otherwise the bundled scikit-learn 8x8 digits are
repackaged into IDX files once per session, so the exact same loader
and training path runs either way, just at a smaller scale.
"""
import os
from dataclasses import dataclass

import numpy as np
import pytest

from noisymlp.data import load_idx_dataset, write_idx_images, write_idx_labels

MNIST_FILES = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
               "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")


@dataclass
class DigitCorpus:
    train_images: str
    train_labels: str
    test_images: str
    test_labels: str

    def load(self):
        pool = load_idx_dataset(self.train_images, self.train_labels)
        test = load_idx_dataset(self.test_images, self.test_labels)
        return pool, test


@pytest.fixture(scope="session")
def digit_corpus(tmp_path_factory):
    mnist_dir = os.environ.get("NOISYMLP_MNIST_DIR")
    if mnist_dir:
        paths = [os.path.join(mnist_dir, name) for name in MNIST_FILES]
        if all(os.path.exists(p) for p in paths):
            return DigitCorpus(*paths)
    from sklearn.datasets import load_digits

    digits = load_digits()
    images = np.round(digits.images * (255.0 / 16.0)).astype(np.uint8)
    labels = digits.target.astype(np.uint8)
    n = images.shape[0]
    perm = np.random.default_rng(12345).permutation(n)
    n_test = 400
    train_idx, test_idx = perm[:-n_test], perm[-n_test:]
    root = tmp_path_factory.mktemp("digit-idx")
    corpus = DigitCorpus(str(root / "train-images.idx"),
                         str(root / "train-labels.idx"),
                         str(root / "test-images.idx"),
                         str(root / "test-labels.idx"))
    write_idx_images(corpus.train_images, images[train_idx])
    write_idx_labels(corpus.train_labels, labels[train_idx])
    write_idx_images(corpus.test_images, images[test_idx])
    write_idx_labels(corpus.test_labels, labels[test_idx])
    return corpus
