"""On-disk formats of a run directory.

trajectory.csv
    iteration, epoch, layer, I_XT_bits, I_TX_bits, H_T_bits, I_XT_raw, I_TX_raw,
    train_loss, test_loss -- one row per (logged iteration, layer)
dpi.csv
    iteration, chain, layer_pair, delta_bits, violation_flag -- delta is
    (downstream - upstream) for the forward chain and (upstream - downstream)
    for the backward chain, so positive means the inequality is broken.
    violation_flag is 1/0, or -1 for pairs excluded from the check.
manifest.json
    run configuration, resolved defaults, dataset checksums, status.
checkpoint.bin
    8-byte magic, uint32 LE header length, JSON header (network spec, block
    names and shapes, metadata), then float64 LE blocks in header order.
"""
import csv
import json
import struct
from dataclasses import astuple, dataclass, fields
from pathlib import Path

import numpy as np

from .models import NetworkSpec

TRAJECTORY_COLUMNS = ("iteration", "epoch", "layer", "I_XT_bits", "I_TX_bits", "H_T_bits",
                      "I_XT_raw", "I_TX_raw", "train_loss", "test_loss")
DPI_COLUMNS = ("iteration", "chain", "layer_pair", "delta_bits", "violation_flag")
CHECKPOINT_MAGIC = b"AEIPCKPT"


class ArtifactError(ValueError):
    pass


@dataclass(frozen=True)
class TrajectoryRecord:
    iteration: int
    epoch: float
    layer: str
    I_XT_bits: float
    I_TX_bits: float
    H_T_bits: float
    I_XT_raw: float
    I_TX_raw: float
    train_loss: float
    test_loss: float


@dataclass(frozen=True)
class DpiRow:
    iteration: int
    chain: str
    layer_pair: str
    delta_bits: float
    violation_flag: int


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


class CsvLog:
    """Append-only CSV writer; flushes after every batch of rows."""

    def __init__(self, path, columns):
        self.path = Path(path)
        self.columns = columns
        self._fh = open(self.path, "w", newline="")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(columns)
        self._fh.flush()

    def write(self, rows):
        for row in rows:
            self._writer.writerow([_fmt(v) for v in astuple(row)])
        self._fh.flush()

    def close(self):
        self._fh.close()


def _read_rows(path, cls):
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"{path}: file not found")
    types = [f.type for f in fields(cls)]
    names = [f.name for f in fields(cls)]
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != names:
            raise ArtifactError(f"{path}:1: unexpected header {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(names):
                raise ArtifactError(f"{path}:{lineno}: expected {len(names)} fields, got {len(row)}")
            try:
                vals = [t(v) for t, v in zip(types, row)]
            except ValueError as exc:
                raise ArtifactError(f"{path}:{lineno}: {exc}") from None
            out.append(cls(*vals))
    return out


def read_trajectory(path):
    return _read_rows(path, TrajectoryRecord)


def read_dpi(path):
    return _read_rows(path, DpiRow)


def write_json(path, obj, sort_keys=True):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=sort_keys) + "\n")


def save_checkpoint(path, spec, params, meta=None):
    names = list(params)
    header = {
        "spec": spec.to_dict(),
        "blocks": [{"name": k, "shape": list(params[k].shape)} for k in names],
        "meta": meta or {},
    }
    hdr = json.dumps(header, sort_keys=True).encode()
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(hdr)))
        fh.write(hdr)
        for k in names:
            fh.write(np.ascontiguousarray(params[k], dtype="<f8").tobytes())
    tmp.replace(path)


def load_checkpoint(path):
    """Return ``(spec, params, meta)`` from a checkpoint file."""
    raw = Path(path).read_bytes()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise ArtifactError(f"{path}: not a checkpoint (bad magic)")
    (n,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12:12 + n])
    offset = 12 + n
    params = {}
    for block in header["blocks"]:
        shape = tuple(block["shape"])
        size = int(np.prod(shape, dtype=np.int64))
        if offset + 8 * size > len(raw):
            raise ArtifactError(f"{path}: truncated at block {block['name']}")
        params[block["name"]] = np.frombuffer(raw, "<f8", size, offset).reshape(shape).astype(np.float64)
        offset += 8 * size
    if offset != len(raw):
        raise ArtifactError(f"{path}: {len(raw) - offset} trailing bytes")
    return NetworkSpec.from_dict(header["spec"]), params, header["meta"]
