"""Rebuild the canonical MNIST IDX files from the copy bundled in the
``mnist-hub`` wheel on PyPI.

The wheel ships ``mnist.pkl.gz`` (50k train / 10k valid / 10k test, float32
pixels equal to byte/256).  Train + valid in order is the original 60k
training file, so the bytes are recovered exactly.

    python scripts/build_mnist_idx.py --out data/mnist
"""
import argparse
import gzip
import io
import pickle
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

import numpy as np


def write_idx_gz(path, array):
    array = np.ascontiguousarray(array, dtype=np.uint8)
    header = bytes([0, 0, 0x08, array.ndim])
    header += b"".join(int(d).to_bytes(4, "big") for d in array.shape)
    with gzip.open(path, "wb") as f:
        f.write(header + array.tobytes())


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="data/mnist")
    ap.add_argument("--wheel", help="already-downloaded mnist_hub wheel")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        wheel = args.wheel
        if wheel is None:
            subprocess.check_call([sys.executable, "-m", "pip", "download", "--no-deps",
                                   "-q", "-d", tmp, "mnist-hub==0.1.4"])
            wheel = next(Path(tmp).glob("mnist_hub-*.whl"))
        raw = zipfile.ZipFile(wheel).read("mnist/data/mnist.pkl.gz")
    with gzip.open(io.BytesIO(raw)) as f:
        train, valid, test = pickle.load(f, encoding="latin1")

    def to_bytes(x):
        b = np.rint(x.astype(np.float64) * 256.0)
        assert np.array_equal(b / 256.0, x.astype(np.float64))
        return b.astype(np.uint8).reshape(-1, 28, 28)

    splits = {
        "train": (np.concatenate([train[0], valid[0]]), np.concatenate([train[1], valid[1]])),
        "t10k": test,
    }
    for name, (x, y) in splits.items():
        write_idx_gz(out / f"{name}-images-idx3-ubyte.gz", to_bytes(x))
        write_idx_gz(out / f"{name}-labels-idx1-ubyte.gz", np.asarray(y, dtype=np.uint8))
        print(f"{name}: {len(y)} images -> {out}")


if __name__ == "__main__":
    main()
