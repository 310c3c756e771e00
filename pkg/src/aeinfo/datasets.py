"""MNIST-format data: IDX parsing, subsets, mini-batches and synthetic inputs.

The IDX container is the one used by MNIST, Fashion-MNIST and EMNIST: a 4-byte
big-endian magic (two zero bytes, a dtype code, the number of dimensions), one
big-endian uint32 per dimension, then the raw payload.  Files may be gzipped.
EMNIST images are stored transposed; they are loaded as-is.
"""
import gzip
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
IMAGE_SHAPE = (28, 28)

_DTYPES = {
    0x08: np.dtype(np.uint8),
    0x09: np.dtype(np.int8),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}


class IdxFormatError(ValueError):
    def __init__(self, path, offset, message):
        super().__init__(f"{path}: byte {offset}: {message}")
        self.path = path
        self.offset = offset


def _read_bytes(path):
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def parse_idx(raw, path="<bytes>"):
    """Decode an IDX byte string into an ndarray."""
    if len(raw) < 4:
        raise IdxFormatError(path, len(raw), "truncated header")
    if raw[0] != 0 or raw[1] != 0 or raw[2] not in _DTYPES:
        raise IdxFormatError(path, 0, f"bad magic {raw[:4].hex()}")
    dtype, ndim = _DTYPES[raw[2]], raw[3]
    header_end = 4 + 4 * ndim
    if len(raw) < header_end:
        raise IdxFormatError(path, len(raw), "truncated dimension header")
    shape = tuple(int.from_bytes(raw[4 + 4 * i: 8 + 4 * i], "big") for i in range(ndim))
    size = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    if len(raw) < header_end + size:
        raise IdxFormatError(path, len(raw), f"payload truncated: expected {size} bytes after header")
    if len(raw) > header_end + size:
        raise IdxFormatError(path, header_end + size, "trailing bytes after payload")
    return np.frombuffer(raw, dtype=dtype, count=size // dtype.itemsize, offset=header_end).reshape(shape)


def read_idx(path):
    return parse_idx(_read_bytes(path), str(path))


def write_idx(path, array, compress=None):
    """Write ``array`` (uint8) as an IDX file; gzip when the name ends in .gz."""
    array = np.ascontiguousarray(array, dtype=np.uint8)
    raw = bytes([0, 0, 0x08, array.ndim])
    raw += b"".join(int(d).to_bytes(4, "big") for d in array.shape) + array.tobytes()
    path = Path(path)
    if compress is None:
        compress = path.suffix == ".gz"
    path.write_bytes(gzip.compress(raw, mtime=0) if compress else raw)


def file_sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray  # N x 784, values in [0, 1]
    labels: np.ndarray  # N, ints in [0, num_classes)
    num_classes: int = 10

    def __post_init__(self):
        if self.images.ndim != 2 or self.labels.ndim != 1:
            raise ValueError("images must be 2-D and labels 1-D")
        if len(self.images) != len(self.labels):
            raise ValueError(f"{len(self.images)} images but {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError(f"labels outside [0, {self.num_classes})")

    def __len__(self):
        return len(self.labels)

    @property
    def one_hot(self):
        out = np.zeros((len(self), self.num_classes))
        out[np.arange(len(self)), self.labels] = 1.0
        return out

    def take(self, idx):
        return Dataset(self.images[idx], self.labels[idx], self.num_classes)


def load_idx(images_path, labels_path, num_classes=None):
    """Load an image/label IDX pair; pixels are scaled to [0, 1]."""
    img_raw = _read_bytes(images_path)
    lab_raw = _read_bytes(labels_path)
    for raw, magic, path in ((img_raw, IMAGE_MAGIC, images_path), (lab_raw, LABEL_MAGIC, labels_path)):
        if len(raw) >= 4 and int.from_bytes(raw[:4], "big") != magic:
            raise IdxFormatError(str(path), 0, f"expected magic {magic:08x}, got {raw[:4].hex()}")
    images = parse_idx(img_raw, str(images_path))
    labels = parse_idx(lab_raw, str(labels_path))
    if images.shape[1:] != IMAGE_SHAPE:
        raise IdxFormatError(str(images_path), 8, f"expected 28x28 images, got {images.shape[1:]}")
    if len(images) != len(labels):
        raise IdxFormatError(str(labels_path), 4,
                             f"{len(images)} images but {len(labels)} labels")
    labels = labels.astype(np.int64)
    if num_classes is None:
        num_classes = max(10, int(labels.max()) + 1) if len(labels) else 10
    pixels = images.reshape(len(images), -1).astype(np.float64) / 255.0
    return Dataset(pixels, labels, num_classes)


def subsample(dataset, fraction, rng):
    """Uniform subset of ``floor(fraction * N)`` rows, without replacement."""
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    n = int(np.floor(fraction * len(dataset)))
    return dataset.take(np.sort(rng.permutation(len(dataset))[:n]))


def batches(dataset, batch_size, rng):
    """Shuffled index slices covering every sample once; the last may be short.

    ``dataset`` may be a Dataset or a sample count.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    n = int(dataset) if isinstance(dataset, (int, np.integer)) else len(dataset)
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def saxe_scalar_dataset(n, rng):
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    return rng.normal((n, 1))


def saxe_vector_dataset(n, rng, dim=100):
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    return rng.normal((n, dim))
