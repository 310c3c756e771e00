import os
from pathlib import Path

import numpy as np
import pytest

from aeinfo.datasets import write_idx
from aeinfo.linalg import Rng

ROOT = Path(__file__).resolve().parents[1]
MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte.gz",
    "train_labels": "train-labels-idx1-ubyte.gz",
    "test_images": "t10k-images-idx3-ubyte.gz",
    "test_labels": "t10k-labels-idx1-ubyte.gz",
}


def mnist_dir():
    return Path(os.environ.get("AEINFO_MNIST_DIR", ROOT / "data" / "mnist"))


def mnist_paths():
    """Paths of the four MNIST files, or None when any is missing."""
    d = mnist_dir()
    paths = {k: d / v for k, v in MNIST_FILES.items()}
    return paths if all(p.is_file() for p in paths.values()) else None


@pytest.fixture(scope="session")
def mnist():
    paths = mnist_paths()
    if paths is None:
        pytest.skip(f"MNIST IDX files not found in {mnist_dir()} "
                    "(run scripts/build_mnist_idx.py or set AEINFO_MNIST_DIR)")
    return paths


def make_idx_pair(directory, n, seed=0, num_classes=10, compress=True):
    """Write a small random image/label IDX pair; returns (images, labels) paths."""
    rng = Rng(seed)
    images = (rng.uniform((n, 28, 28)) * 256).astype(np.uint8)
    labels = np.arange(n) % num_classes
    labels = labels[rng.permutation(n)].astype(np.uint8)
    ext = ".gz" if compress else ""
    img_path = Path(directory) / f"images-idx3-ubyte{ext}"
    lab_path = Path(directory) / f"labels-idx1-ubyte{ext}"
    write_idx(img_path, images)
    write_idx(lab_path, labels)
    return img_path, lab_path


@pytest.fixture
def tiny_idx(tmp_path):
    """300 random 28x28 images with labels; returns (images, labels) paths."""
    return make_idx_pair(tmp_path, 300)


# --- acceptance report ----------------------------------------------------------

ACCEPTANCE = {}


def record_acceptance(number, passed, detail):
    """Store one criterion verdict; printed in the terminal summary."""
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return passed


def record_info(number, detail):
    """Store a criterion that is reported without a verdict."""
    line = f"criterion {number:>2}: INFO  {detail}"
    ACCEPTANCE.setdefault(number, line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])
