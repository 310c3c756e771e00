"""Command-line interface: ``aeinfo {train,validate-estimator,saxe,interpolate,report}``.

Exit status is 0 on success, 1 for usage errors (bad flags, missing inputs)
and 2 when a command fails at run time (aborted training, corrupt files).
"""
import argparse
import csv
import datetime
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import ArtifactError, load_checkpoint, read_dpi, read_trajectory, write_json
from .datasets import IdxFormatError, read_idx
from .estimator import EstimatorConfig
from .experiments import (DEFAULT_W_GRID, lae_interpolate, max_decrease, to_pgm,
                          validate_estimator, weight_scan_experiment)
from .harness import (INPUT, OUTPUT, RunConfig, TrainingAborted, detect_simplifying_phase,
                      run_training, snapshots)
from .linalg import Rng
from .models import NetworkSpec, deep_spec, shallow_spec

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

# train settings that may come from flags or a config file
TRAIN_DEFAULTS = {
    "model": None, "arch": "shallow", "images": None, "labels": None,
    "test_images": None, "test_labels": None, "epochs": 50, "seed": 0, "out": None,
    "train_fraction": 1.0, "batch_size": 100, "probe_size": 100, "log_every": 50,
    "alpha": 1.01, "gamma": 2.0, "eig_method": "jacobi", "lr": 1e-3, "test_size": 1000,
    "rho": None, "sparsity_weight": None, "lae_lambda": None, "layer_dims": None,
}
MODEL_ONLY = {"rho": "sae", "sparsity_weight": "sae", "lae_lambda": "lae"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _write_manifest(out, command, settings):
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "manifest.json", {"command": command, "settings": settings,
                                       "package_version": __version__, "started_at": _now()})


# --- train --------------------------------------------------------------------

def _settings_from_manifest(manifest):
    cfg = RunConfig.from_dict(manifest["config"])
    s = cfg.spec
    return {
        "model": s.variant, "layer_dims": list(s.layer_dims),
        "images": cfg.train_images, "labels": cfg.train_labels,
        "test_images": cfg.test_images, "test_labels": cfg.test_labels,
        "epochs": cfg.epochs, "seed": cfg.seed, "out": cfg.out_dir,
        "train_fraction": cfg.train_fraction, "batch_size": cfg.batch_size,
        "probe_size": cfg.probe_size, "log_every": cfg.log_every,
        "alpha": cfg.estimator.alpha, "gamma": cfg.estimator.gamma,
        "eig_method": cfg.estimator.eig_method, "lr": cfg.lr, "test_size": cfg.test_size,
        **({"rho": s.sparsity_rho, "sparsity_weight": s.sparsity_weight} if s.variant == "sae" else {}),
        **({"lae_lambda": s.lae_lambda} if s.variant == "lae" else {}),
    }


def _load_config(path):
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise UsageError(f"{path}: expected a JSON object")
    if "config" in data and isinstance(data["config"], dict):
        return _settings_from_manifest(data)
    data = {k.replace("-", "_"): v for k, v in data.items()}
    unknown = sorted(set(data) - set(TRAIN_DEFAULTS))
    if unknown:
        raise UsageError(f"{path}: unknown keys {unknown}")
    return data


def resolve_train_settings(args):
    """Defaults, then config file values, then explicitly given flags."""
    settings = dict(TRAIN_DEFAULTS)
    if getattr(args, "config", None):
        settings.update(_load_config(args.config))
    explicit = {k: v for k, v in vars(args).items() if k in TRAIN_DEFAULTS}
    settings.update(explicit)

    model = settings["model"]
    if model is None:
        raise UsageError("--model is required")
    for key, owner in MODEL_ONLY.items():
        if settings[key] is not None and model != owner:
            raise UsageError(f"--{key.replace('_', '-')} only applies to --model {owner}")
    for key in ("images", "labels", "out"):
        if not settings[key]:
            raise UsageError(f"--{key} is required")
    if bool(settings["test_images"]) != bool(settings["test_labels"]):
        raise UsageError("--test-images and --test-labels must be given together")
    for key in ("images", "labels", "test_images", "test_labels"):
        if settings[key] and not Path(settings[key]).is_file():
            raise UsageError(f"--{key.replace('_', '-')}: no such file {settings[key]}")
    return settings


def _num_classes(labels_path):
    labels = read_idx(labels_path)
    return max(10, int(labels.max()) + 1) if labels.size else 10


def build_run_config(settings):
    model = settings["model"]
    kw = {}
    if model == "sae":
        kw = {k: v for k, v in (("sparsity_rho", settings["rho"]),
                                ("sparsity_weight", settings["sparsity_weight"])) if v is not None}
    elif model == "lae" and settings["lae_lambda"] is not None:
        kw = {"lae_lambda": settings["lae_lambda"]}
    if settings["layer_dims"] is not None:
        spec = NetworkSpec(model, tuple(settings["layer_dims"]), **kw)
    else:
        # the LAE bottleneck is a class-probability vector
        bottleneck = _num_classes(settings["labels"]) if model == "lae" else 50
        build = shallow_spec if settings["arch"] == "shallow" else deep_spec
        spec = build(model, bottleneck=bottleneck, **kw)
    est = EstimatorConfig(alpha=settings["alpha"], gamma=settings["gamma"],
                          eig_method=settings["eig_method"])
    return RunConfig(
        spec=spec, out_dir=str(settings["out"]),
        train_images=settings["images"], train_labels=settings["labels"],
        test_images=settings["test_images"], test_labels=settings["test_labels"],
        train_fraction=settings["train_fraction"], epochs=settings["epochs"],
        batch_size=settings["batch_size"], probe_size=settings["probe_size"],
        log_every=settings["log_every"], estimator=est, seed=settings["seed"],
        lr=settings["lr"], test_size=settings["test_size"],
    )


def cmd_train(args):
    settings = resolve_train_settings(args)
    try:
        config = build_run_config(settings)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    result = run_training(config)
    m = result.manifest
    print(f"{config.spec.variant} {list(config.spec.layer_dims)}: {m['iterations']} iterations, "
          f"max DPI violation {m['max_dpi_violation']:.4f} bits, "
          f"max diagonal excess {m['max_diagonal_violation']:.4f} bits -> {result.out_dir}")
    return EXIT_OK


# --- validate-estimator -------------------------------------------------------

def cmd_validate_estimator(args):
    for rho in args.rho_list:
        if not abs(rho) < 1:
            raise UsageError(f"every rho must satisfy |rho| < 1, got {rho}")
    if args.n < 2:
        raise UsageError("--n must be >= 2")
    if any(b < 2 for b in args.bins_list):
        raise UsageError("every bin count must be >= 2")
    out = Path(args.out)
    _write_manifest(out, "validate-estimator", {
        "rho_list": args.rho_list, "n": args.n, "bins_list": args.bins_list, "seed": args.seed,
        "alpha": args.alpha, "gamma": args.gamma})
    est = EstimatorConfig(alpha=args.alpha, gamma=args.gamma)
    rows = validate_estimator(args.rho_list, args.n, args.bins_list, est, Rng(args.seed))
    path = out / "estimator_validation.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rho", "n", "analytic_bits", "kernel_bits"] + [f"binning_{b}_bits" for b in args.bins_list])
        for r in rows:
            w.writerow([repr(r.rho), r.n, repr(r.analytic_bits), repr(r.kernel_bits)]
                       + [repr(r.binning_bits[b]) for b in args.bins_list])
    for r in rows:
        bins = " ".join(f"bins={b}:{v:.3f}" for b, v in r.binning_bits.items())
        print(f"rho={r.rho:<5g} analytic={r.analytic_bits:.3f} kernel={r.kernel_bits:.3f} {bins}")
    print(f"wrote {path}")
    return EXIT_OK


# --- saxe ---------------------------------------------------------------------

def cmd_saxe(args):
    if args.wmax < 1:
        raise UsageError("--wmax must be >= 1")
    grid = [w for w in DEFAULT_W_GRID if w <= args.wmax]
    k = len(DEFAULT_W_GRID)
    while 2.0 ** k <= args.wmax:
        grid.append(2.0 ** k)
        k += 1
    if args.zero:
        grid = [0.0] + grid
    out = Path(args.out)
    _write_manifest(out, "saxe", {"activations": args.activation, "variant": args.variant,
                                  "w_grid": grid, "n": args.n, "seed": args.seed})
    path = out / "saxe.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["activation", "variant", "w", "I_bits"])
        for act in args.activation:
            points = weight_scan_experiment(act, args.variant, grid, args.n, rng=Rng(args.seed))
            for p in points:
                w.writerow([act, args.variant, repr(p.w), repr(p.bits)])
            fh.flush()
            print(f"{act:8s} " + " ".join(f"{p.bits:.3f}" for p in points)
                  + f"  (largest drop {max_decrease([p for p in points if p.w > 0]):.3f} bits)")
    print(f"wrote {path}")
    return EXIT_OK


# --- interpolate --------------------------------------------------------------

def cmd_interpolate(args):
    ckpt = Path(args.checkpoint)
    if not ckpt.is_file():
        raise UsageError(f"--checkpoint: no such file {ckpt}")
    spec, params, _ = load_checkpoint(ckpt)
    if spec.variant != "lae":
        raise UsageError(f"{ckpt} holds a {spec.variant!r} model; interpolation needs an LAE checkpoint")
    out = Path(args.out)
    _write_manifest(out, "interpolate", {"checkpoint": str(ckpt), "from": args.digit_from,
                                         "to": args.digit_to, "steps": args.steps})
    try:
        rows = lae_interpolate(params, spec, args.digit_from, args.digit_to, args.steps)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    np.savetxt(out / "interpolation.csv", rows, delimiter=",", fmt="%.17g")
    (out / "interpolation.pgm").write_bytes(to_pgm(rows))
    print(f"wrote {len(rows)} images to {out / 'interpolation.csv'} and {out / 'interpolation.pgm'}")
    return EXIT_OK


# --- report -------------------------------------------------------------------

def summarize_run(run_dir, delta=0.1):
    run_dir = Path(run_dir)
    records = read_trajectory(run_dir / "trajectory.csv")
    if not records:
        raise ArtifactError(f"{run_dir / 'trajectory.csv'}: no records")
    dpi_path = run_dir / "dpi.csv"
    dpi_rows = read_dpi(dpi_path) if dpi_path.exists() else []
    snaps = snapshots(records)
    final_it = max(snaps)
    final = snaps[final_it]
    checked = [r.delta_bits for r in dpi_rows if r.violation_flag != -1]
    layers = {}
    for name, rec in final.items():
        entry = {"I_XT_bits": rec.I_XT_bits, "I_TX_bits": rec.I_TX_bits, "H_T_bits": rec.H_T_bits}
        if len(snaps) >= 3:
            phase = detect_simplifying_phase(records, name, delta)
            entry.update(simplifying_phase=phase.present, phase_drop_bits=phase.drop,
                         phase_peak_iteration=phase.peak_iteration)
        else:
            entry.update(simplifying_phase=None, phase_drop_bits=None, phase_peak_iteration=None)
        layers[name] = entry
    internal = [n for n in final if n not in (INPUT, OUTPUT)]
    return {
        "run_dir": str(run_dir),
        "final_iteration": final_it,
        "final_epoch": next(iter(final.values())).epoch,
        "log_points": len(snaps),
        "layers": layers,
        "internal_layers": internal,
        "max_dpi_violation_bits": max(checked + [0.0]),
        "final_train_loss": next(iter(final.values())).train_loss,
        "final_test_loss": next(iter(final.values())).test_loss,
    }


def _fmt(v, spec=".3f"):
    if v is None:
        return "-"
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float) and math.isnan(v):
        return "nan"
    return format(v, spec)


def cmd_report(args):
    run_dir = Path(args.run_dir)
    if not (run_dir / "trajectory.csv").is_file():
        raise UsageError(f"{run_dir}: no trajectory.csv")
    summary = summarize_run(run_dir, args.delta)
    out = Path(args.out) if args.out else run_dir / "summary.json"
    write_json(out, summary, sort_keys=False)  # keep layers in chain order
    print(f"iteration {summary['final_iteration']} (epoch {summary['final_epoch']:.2f}), "
          f"{summary['log_points']} log points")
    print("layer    I(X;T)  I(T;X')  phase    drop")
    for name, e in summary["layers"].items():
        print(f"{name:6s} {_fmt(e['I_XT_bits']):>8s} {_fmt(e['I_TX_bits']):>8s} "
              f"{_fmt(e['simplifying_phase']):>6s} {_fmt(e['phase_drop_bits']):>7s}")
    print(f"max DPI violation {summary['max_dpi_violation_bits']:.4f} bits; "
          f"train loss {_fmt(summary['final_train_loss'], '.4f')}, "
          f"test loss {_fmt(summary['final_test_loss'], '.4f')}")
    print(f"wrote {out}")
    return EXIT_OK


# --- parser -------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="aeinfo", description="Information-plane analysis of autoencoders.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    S = argparse.SUPPRESS

    t = sub.add_parser("train", help="train an autoencoder and log its information plane",
                       description="Train one autoencoder and write trajectory.csv, dpi.csv, "
                                   "manifest.json and checkpoint.bin to --out. Values from "
                                   "--config are overridden by flags given on the command line.")
    t.add_argument("--config", help="JSON file of settings (flag names as keys) or a run manifest")
    t.add_argument("--model", choices=("ae", "sae", "tae", "vae", "lae"), default=S,
                   help="autoencoder variant")
    t.add_argument("--arch", choices=("shallow", "deep"), default=S,
                   help="784-50-784 or 784-256-128-50-128-256-784 (default shallow)")
    t.add_argument("--images", default=S, help="training images (IDX, optionally gzipped)")
    t.add_argument("--labels", default=S, help="training labels (IDX)")
    t.add_argument("--test-images", default=S, help="test images (IDX)")
    t.add_argument("--test-labels", default=S, help="test labels (IDX)")
    t.add_argument("--out", default=S, help="output run directory")
    t.add_argument("--epochs", type=int, default=S, help="training epochs (default 50)")
    t.add_argument("--seed", type=int, default=S, help="random seed (default 0)")
    t.add_argument("--train-fraction", type=float, default=S,
                   help="fraction of the training set to use (default 1.0)")
    t.add_argument("--batch-size", type=int, default=S, help="mini-batch size (default 100)")
    t.add_argument("--probe-size", type=int, default=S,
                   help="samples in the fixed MI probe batch (default 100)")
    t.add_argument("--log-every", type=int, default=S, help="iterations between log points (default 50)")
    t.add_argument("--test-size", type=int, default=S, help="test samples used for test loss (default 1000)")
    t.add_argument("--lr", type=float, default=S, help="Adam learning rate (default 1e-3)")
    t.add_argument("--alpha", type=float, default=S, help="Renyi order (default 1.01)")
    t.add_argument("--gamma", type=float, default=S, help="bandwidth scale (default 2)")
    t.add_argument("--eig-method", choices=("jacobi", "sturm"), default=S,
                   help="eigenvalue routine for the estimator (default jacobi)")
    t.add_argument("--rho", type=float, default=S, help="SAE target activity (default 0.05)")
    t.add_argument("--sparsity-weight", type=float, default=S, help="SAE penalty weight (default 0.1)")
    t.add_argument("--lae-lambda", type=float, default=S, help="LAE cross-entropy weight (default 0.01)")
    t.set_defaults(func=cmd_train)

    v = sub.add_parser("validate-estimator", help="compare MI estimators with the Gaussian closed form")
    v.add_argument("--rho-list", type=_float_list, default=[0.0, 0.3, 0.6, 0.9],
                   help="comma-separated correlations (default 0,0.3,0.6,0.9)")
    v.add_argument("--n", type=int, default=1000, help="samples per correlation (default 1000)")
    v.add_argument("--bins-list", type=_int_list, default=[5, 20, 100],
                   help="comma-separated bin counts for the binning estimator (default 5,20,100)")
    v.add_argument("--alpha", type=float, default=1.01, help="Renyi order (default 1.01)")
    v.add_argument("--gamma", type=float, default=2.0, help="bandwidth scale (default 2)")
    v.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    v.add_argument("--out", required=True, help="output directory")
    v.set_defaults(func=cmd_validate_estimator)

    s = sub.add_parser("saxe", help="input MI of z = f(w x) over a doubling weight grid")
    s.add_argument("--activation", type=lambda t: t.split(","), default=["linear", "relu", "sigmoid"],
                   help="comma-separated subset of linear,relu,sigmoid (default all)")
    s.add_argument("--variant", choices=("scalar", "vector"), default="scalar",
                   help="1-d input or 100-d input with 50 hidden units (default scalar)")
    s.add_argument("--wmax", type=float, default=256.0, help="largest weight scale, grid 1,2,4,... (default 256)")
    s.add_argument("--zero", action="store_true", help="prepend the w=0 control point")
    s.add_argument("--n", type=int, default=1000, help="samples (default 1000)")
    s.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_saxe)

    i = sub.add_parser("interpolate", help="decode a path between two one-hot LAE codes")
    i.add_argument("--checkpoint", required=True, help="LAE checkpoint.bin")
    i.add_argument("--from", dest="digit_from", type=int, required=True, help="starting class")
    i.add_argument("--to", dest="digit_to", type=int, required=True, help="final class")
    i.add_argument("--steps", type=int, default=10, help="images along the path, >= 2 (default 10)")
    i.add_argument("--out", required=True, help="output directory")
    i.set_defaults(func=cmd_interpolate)

    r = sub.add_parser("report", help="summarize a training run directory")
    r.add_argument("--run-dir", required=True, help="directory written by 'train'")
    r.add_argument("--delta", type=float, default=0.1,
                   help="minimum drop in bits counted as a simplifying phase (default 0.1)")
    r.add_argument("--out", help="summary path (default RUN_DIR/summary.json)")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "saxe":
        bad = [a for a in args.activation if a not in ("linear", "relu", "sigmoid")]
        if bad:
            print(f"aeinfo saxe: error: unknown activation(s) {bad}", file=sys.stderr)
            return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"aeinfo {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingAborted, ArtifactError, IdxFormatError, FloatingPointError,
            ValueError, OSError) as exc:
        print(f"aeinfo {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
