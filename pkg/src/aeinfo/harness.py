"""Training runs with information-plane logging.

A run trains one autoencoder and, every ``log_every`` iterations, pushes a
frozen probe batch through the network and records for each representation T
the pair (I(X;T), I(T;X')) together with H(T) and the current losses.
"""
import datetime
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import __version__
from ._accel import default_backend
from .artifacts import (DPI_COLUMNS, TRAJECTORY_COLUMNS, CsvLog, DpiRow, TrajectoryRecord,
                        save_checkpoint, write_json)
from .datasets import file_sha256, load_idx, subsample
from .datasets import batches as make_batches
from .estimator import EstimatorConfig, information_from_grams, renyi_entropy, variable_gram
from .linalg import Rng
from .models import Adam, NetworkSpec, forward, init_weights, loss_and_grads, loss_terms

log = logging.getLogger(__name__)

INPUT, OUTPUT = "X", "X'"


class TrainingAborted(RuntimeError):
    def __init__(self, message, checkpoint=None):
        super().__init__(message if checkpoint is None else f"{message} (last good checkpoint: {checkpoint})")
        self.checkpoint = checkpoint


@dataclass
class RunConfig:
    spec: NetworkSpec
    out_dir: str
    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    train_fraction: float = 1.0
    epochs: int = 50
    batch_size: int = 100
    probe_size: int = 100
    log_every: int = 50
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    seed: int = 0
    lr: float = 1e-3
    test_size: int = 1000
    train_eval_size: int = 1000
    eps_dpi: float = 0.05
    eps_diag: float = 0.05
    phase_delta: float = 0.1

    def __post_init__(self):
        if self.log_every < 1:
            raise ValueError("log_every must be >= 1")
        if self.epochs < 0 or self.batch_size < 1 or self.probe_size < 2:
            raise ValueError("need epochs >= 0, batch_size >= 1 and probe_size >= 2")

    def to_dict(self):
        d = asdict(self)
        d["spec"] = self.spec.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["spec"] = NetworkSpec.from_dict(d["spec"])
        d["estimator"] = EstimatorConfig(**d.get("estimator", {}))
        return cls(**d)


class LayerInfo(NamedTuple):
    layer: str
    i_xt: object  # MIEstimate
    i_tx: object
    h_t: float


@dataclass
class DpiEntry:
    iteration: int
    forward: list  # [(pair, delta, checked)]
    backward: list
    eps: float = 0.05

    @property
    def max_forward(self):
        return max((d for _, d, ok in self.forward if ok), default=0.0)

    @property
    def max_backward(self):
        return max((d for _, d, ok in self.backward if ok), default=0.0)

    @property
    def max_violation(self):
        return max(self.max_forward, self.max_backward)

    def rows(self):
        out = []
        for chain, pairs in (("forward", self.forward), ("backward", self.backward)):
            for pair, delta, checked in pairs:
                flag = int(delta > self.eps) if checked else -1
                out.append(DpiRow(self.iteration, chain, pair, float(delta), flag))
        return out


@dataclass
class RunResult:
    trajectory: list
    dpi: list
    params: dict
    manifest: dict
    out_dir: Path


# --- information measures ---------------------------------------------------

def compute_layer_mi(probe_inputs, trace, estimator=EstimatorConfig(), input_gram=None,
                     input_entropy=None):
    """I(X;T), I(T;X') and H(T) for X, every internal layer and X'."""
    cfg = estimator
    alpha, method, backend = cfg.alpha, cfg.eig_method, cfg.backend
    a_x = variable_gram(probe_inputs, cfg) if input_gram is None else input_gram
    h_x = renyi_entropy(a_x, alpha, method, backend) if input_entropy is None else input_entropy
    a_out = variable_gram(trace.output, cfg)
    h_out = renyi_entropy(a_out, alpha, method, backend)

    reps = [(INPUT, a_x, h_x)]
    for name, t in trace.layers.items():
        a_t = variable_gram(t, cfg)
        reps.append((name, a_t, renyi_entropy(a_t, alpha, method, backend)))
    reps.append((OUTPUT, a_out, h_out))

    out = []
    for name, a_t, h_t in reps:
        i_xt = information_from_grams(a_x, a_t, alpha, method, backend, h_a=h_x, h_b=h_t)
        i_tx = information_from_grams(a_t, a_out, alpha, method, backend, h_a=h_t, h_b=h_out)
        out.append(LayerInfo(name, i_xt, i_tx, h_t))
    return out


def chain_deltas(values):
    """Successive differences ``later - earlier`` along a chain that should not increase."""
    return [b - a for a, b in zip(values, values[1:])]


def check_dpi(snapshot, layer_names, iteration=0, eps=0.05, exclude=()):
    """DPI violations for one logged iteration.

    ``snapshot`` maps layer name to a record with ``I_XT_bits``/``I_TX_bits``
    (or to a ``(I_XT, I_TX)`` pair).  Pairs touching a layer in ``exclude`` are
    reported but not checked.
    """
    def get(name, k):
        r = snapshot[name]
        return r[k] if isinstance(r, (tuple, list)) else (r.I_XT_bits, r.I_TX_bits)[k]

    z = layer_names.index("Z")
    enc = layer_names[:z + 1]
    dec = layer_names[z:]
    fwd = [(f"{a}->{b}", d, a not in exclude and b not in exclude)
           for (a, b), d in zip(zip(enc, enc[1:]), chain_deltas([get(n, 0) for n in enc]))]
    # backward inequality I(Z;X') <= I(D1;X') <= ...: walking from the output
    # back toward Z the values must not increase.
    rev = dec[::-1]
    bwd = [(f"{b}->{a}", d, a not in exclude and b not in exclude)
           for (a, b), d in zip(zip(rev, rev[1:]), chain_deltas([get(n, 1) for n in rev]))]
    return DpiEntry(iteration, fwd, bwd[::-1], eps)


def diagonal_bound_check(records, layers=None):
    """Largest I(T;X') - I(X;T) over the records (internal layers by default)."""
    if layers is None:
        rows = [r for r in records if r.layer not in (INPUT, OUTPUT)]
    else:
        rows = [r for r in records if r.layer in layers]
    if not rows:
        raise ValueError("no records to check")
    return max(r.I_TX_bits - r.I_XT_bits for r in rows)


class PhaseResult(NamedTuple):
    present: bool
    peak_iteration: int
    drop: float


def detect_simplifying_phase(records, layer, delta=0.1):
    """Does I(X;T) rise to a peak and then fall back by at least ``delta`` bits?"""
    rows = sorted((r for r in records if r.layer == layer), key=lambda r: r.iteration)
    if len(rows) < 3:
        raise ValueError(f"need >= 3 log points for layer {layer}, got {len(rows)}")
    values = np.array([r.I_XT_bits for r in rows])
    peak = int(np.argmax(values))
    drop = float(values[peak] - values[-1])
    return PhaseResult(drop >= delta, rows[peak].iteration, drop)


def snapshots(records):
    """Group trajectory records by iteration: ``{iteration: {layer: record}}``."""
    out = {}
    for r in records:
        out.setdefault(r.iteration, {})[r.layer] = r
    return out


# --- training -----------------------------------------------------------------

def _load(config):
    if config.train_images is None or config.train_labels is None:
        raise ValueError("training data paths are required")
    train = load_idx(config.train_images, config.train_labels)
    test = None
    if config.test_images and config.test_labels:
        test = load_idx(config.test_images, config.test_labels)
    return train, test


def _checksums(config):
    out = {}
    for key in ("train_images", "train_labels", "test_images", "test_labels"):
        path = getattr(config, key)
        if path:
            out[key] = file_sha256(path)
    return out


def _eval_loss(params, spec, data, noise):
    if data is None or len(data) == 0:
        return float("nan")
    trace = forward(params, spec, data.images, noise=noise)
    y = data.one_hot if spec.variant == "lae" else None
    return loss_terms(spec, trace, y)[0]


def run_training(config, train=None, test=None):
    """Train ``config.spec`` and log its information-plane trajectory.

    Datasets may be passed in directly; otherwise they are loaded from the
    paths in ``config``.  All artifacts go to ``config.out_dir``.
    """
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = config.spec
    manifest = {
        "config": config.to_dict(),
        "package_version": __version__,
        "backend": default_backend(),
        "dataset_sha256": _checksums(config) if train is None else {},
        "probe": "first probe_size samples of the seed-shuffled training subset",
        "test_subset": "first test_size samples of the test set",
        "started_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "status": "running",
    }
    write_json(out / "manifest.json", manifest)

    if train is None:
        train, test = _load(config)
    rng = Rng(config.seed)
    data_rng, init_rng, shuffle_rng, noise_rng, probe_rng = (rng.child(i) for i in range(5))

    if config.train_fraction < 1.0:
        train = subsample(train, config.train_fraction, data_rng)
    if config.probe_size > len(train):
        raise ValueError(f"probe_size {config.probe_size} exceeds training set size {len(train)}")
    order = data_rng.permutation(len(train))
    probe = train.take(order[:config.probe_size])
    train_eval = train.take(order[:min(config.train_eval_size, len(train))])
    test_eval = test.take(np.arange(min(config.test_size, len(test)))) if test is not None else None
    manifest["n_train"] = len(train)
    manifest["n_test_eval"] = 0 if test_eval is None else len(test_eval)

    params = init_weights(spec, init_rng)
    opt = Adam(params, lr=config.lr)
    z_dim = spec.layer_dims[spec.z_index]

    def frozen_noise(n):
        return probe_rng.normal((n, z_dim)) if spec.variant == "vae" else None

    probe_noise = frozen_noise(len(probe))
    train_noise = frozen_noise(len(train_eval))
    test_noise = frozen_noise(0 if test_eval is None else len(test_eval))

    est = config.estimator
    a_x = variable_gram(probe.images, est)
    h_x = renyi_entropy(a_x, est.alpha, est.eig_method, est.backend)
    names = spec.layer_names
    exclude = ("Z",) if spec.variant == "vae" else ()

    traj_log = CsvLog(out / "trajectory.csv", TRAJECTORY_COLUMNS)
    dpi_log = CsvLog(out / "dpi.csv", DPI_COLUMNS)
    trajectory, dpi = [], []
    ckpt = out / "checkpoint.bin"
    iters_per_epoch = max(1, math.ceil(len(train) / config.batch_size))
    labels = train.one_hot if spec.variant == "lae" else None

    def log_point(iteration):
        epoch = iteration / iters_per_epoch
        trace = forward(params, spec, probe.images, noise=probe_noise)
        infos = compute_layer_mi(probe.images, trace, est, a_x, h_x)
        tr_loss = _eval_loss(params, spec, train_eval, train_noise)
        te_loss = _eval_loss(params, spec, test_eval, test_noise)
        rows = [TrajectoryRecord(iteration, epoch, li.layer, li.i_xt.bits, li.i_tx.bits, li.h_t,
                                 li.i_xt.raw, li.i_tx.raw, tr_loss, te_loss) for li in infos]
        entry = check_dpi({r.layer: r for r in rows}, names, iteration, config.eps_dpi, exclude)
        traj_log.write(rows)
        dpi_log.write(entry.rows())
        trajectory.extend(rows)
        dpi.append(entry)
        save_checkpoint(ckpt, spec, params, {"iteration": iteration})
        log.info("iter %d epoch %.2f train %.4f test %.4f", iteration, epoch, tr_loss, te_loss)

    try:
        iteration = 0
        log_point(0)
        last_logged = 0
        for _ in range(config.epochs):
            for idx in make_batches(len(train), config.batch_size, shuffle_rng):
                x = train.images[idx]
                y = None if labels is None else labels[idx]
                try:
                    loss, _, grads, _ = loss_and_grads(params, spec, x, y, rng=noise_rng)
                except FloatingPointError as exc:
                    raise TrainingAborted(f"iteration {iteration + 1}: {exc}", ckpt) from None
                if not math.isfinite(loss):
                    raise TrainingAborted(f"non-finite loss at iteration {iteration + 1}", ckpt)
                opt.step(params, grads)
                iteration += 1
                if iteration % config.log_every == 0:
                    log_point(iteration)
                    last_logged = iteration
        if last_logged != iteration:
            log_point(iteration)
    except TrainingAborted as exc:
        manifest.update(status="aborted", error=str(exc))
        write_json(out / "manifest.json", manifest)
        raise
    finally:
        traj_log.close()
        dpi_log.close()

    manifest.update(
        status="complete",
        iterations=iteration,
        finished_at=datetime.datetime.now(datetime.timezone.utc).isoformat(),
        max_dpi_violation=max((e.max_violation for e in dpi), default=0.0),
        max_diagonal_violation=diagonal_bound_check(trajectory),
    )
    write_json(out / "manifest.json", manifest)
    return RunResult(trajectory, dpi, params, manifest, out)


def rerun_config(manifest, out_dir=None):
    """RunConfig recorded in a manifest, optionally redirected to a new directory."""
    cfg = RunConfig.from_dict(manifest["config"])
    return replace(cfg, out_dir=str(out_dir)) if out_dir is not None else cfg
