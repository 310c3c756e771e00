import json
import math
from types import SimpleNamespace

import numpy as np
import pytest

from aeinfo import harness
from aeinfo.artifacts import (ArtifactError, CsvLog, TRAJECTORY_COLUMNS, TrajectoryRecord,
                              load_checkpoint, read_dpi, read_trajectory, save_checkpoint)
from aeinfo.estimator import EstimatorConfig, renyi_entropy, variable_gram
from aeinfo.harness import (RunConfig, TrainingAborted, check_dpi, compute_layer_mi,
                            detect_simplifying_phase, diagonal_bound_check, rerun_config,
                            run_training, snapshots)
from aeinfo.linalg import Rng
from aeinfo.models import NetworkSpec, deep_spec, forward, init_weights, shallow_spec


def rec(layer, i_xt, i_tx, iteration=0):
    return TrajectoryRecord(iteration, 0.0, layer, i_xt, i_tx, 0.0, i_xt, i_tx, 0.0, 0.0)


def small_config(tmp_path, idx, variant="ae", dims=(784, 16, 784), **kw):
    img, lab = idx
    base = dict(spec=NetworkSpec(variant, dims), out_dir=str(tmp_path / "run"),
                train_images=str(img), train_labels=str(lab), test_images=str(img),
                test_labels=str(lab), epochs=2, batch_size=50, probe_size=40, log_every=4,
                test_size=100, train_eval_size=100, lr=1e-2)
    base.update(kw)
    return RunConfig(**base)


# --- DPI, diagonal bound, simplifying phase -------------------------------------

NAMES = ["E1", "E2", "Z", "D1", "D2"]


def test_dpi_strictly_decreasing_chain_has_no_violation():
    snap = {"E1": (5, 1), "E2": (4, 2), "Z": (3, 3), "D1": (2.5, 4), "D2": (2, 5)}
    e = check_dpi(snap, NAMES)
    # the largest signed step; negative means every pair has slack
    assert e.max_forward == -1 and e.max_backward == -1 and e.max_violation == -1


def test_dpi_hand_built_violation():
    snap = {"E1": (3.0, 1), "E2": (3.2, 2), "Z": (2.0, 3), "D1": (1.9, 4), "D2": (1.8, 5)}
    e = check_dpi(snap, NAMES, eps=0.05)
    assert e.max_forward == pytest.approx(0.2)
    rows = {r.layer_pair: r for r in e.rows() if r.chain == "forward"}
    assert rows["E1->E2"].violation_flag == 1 and rows["E2->Z"].violation_flag == 0


def test_dpi_backward_chain_labels_and_sign():
    # I(D1;X') larger than I(D2;X') breaks the backward inequality by 0.3
    snap = {"E1": (5, 1), "E2": (4, 2), "Z": (3, 3), "D1": (2.5, 4.3), "D2": (2, 4.0)}
    e = check_dpi(snap, NAMES)
    pairs = {p: d for p, d, _ in e.backward}
    assert set(pairs) == {"Z->D1", "D1->D2"}
    assert pairs["D1->D2"] == pytest.approx(0.3)
    assert e.max_backward == pytest.approx(0.3)


def test_dpi_excluded_pairs_are_reported_but_not_checked():
    snap = {"E1": (5, 1), "E2": (4, 2), "Z": (6, 3), "D1": (2.5, 4), "D2": (2, 5)}
    e = check_dpi(snap, NAMES, exclude=("Z",))
    assert e.max_violation == -1  # the +2 step into Z is not counted
    flags = {(r.chain, r.layer_pair): r.violation_flag for r in e.rows()}
    assert flags[("forward", "E2->Z")] == -1 and flags[("backward", "Z->D1")] == -1
    assert flags[("forward", "E1->E2")] == 0


def test_diagonal_bound_examples():
    assert diagonal_bound_check([rec("Z", 2.0, 2.5)]) == pytest.approx(0.5)
    assert diagonal_bound_check([rec("Z", 2.0, 1.5), rec("E1", 3.0, 2.9)]) == pytest.approx(-0.1)
    with pytest.raises(ValueError):
        diagonal_bound_check([])
    with pytest.raises(ValueError):
        diagonal_bound_check([rec("X", 6.0, 6.0)])


def test_simplifying_phase_detection():
    mono = [rec("Z", v, 0, i) for i, v in enumerate([1.0, 2.0, 3.0])]
    assert not detect_simplifying_phase(mono, "Z").present
    bump = [rec("Z", v, 0, i * 50) for i, v in enumerate([1.0, 3.0, 2.0])]
    res = detect_simplifying_phase(bump, "Z", delta=0.5)
    assert res.present and res.drop == pytest.approx(1.0) and res.peak_iteration == 50
    assert not detect_simplifying_phase(bump, "Z", delta=1.5).present
    with pytest.raises(ValueError, match=">= 3 log points"):
        detect_simplifying_phase(bump[:2], "Z")


# --- layer MI ---------------------------------------------------------------------

def test_layer_mi_identity_row_and_composition_oracle():
    spec = NetworkSpec("ae", (20, 6, 20))
    rng = Rng(0)
    params = init_weights(spec, rng)
    x = rng.uniform((30, 20))
    trace = forward(params, spec, x)
    infos = {li.layer: li for li in compute_layer_mi(x, trace)}
    assert list(infos) == ["X", "Z", "X'"]
    cfg = EstimatorConfig()
    a_x, a_z, a_o = (variable_gram(t, cfg) for t in (x, trace.bottleneck, trace.output))

    def s(a):
        return renyi_entropy(a / np.trace(a))
    assert infos["Z"].i_xt.raw == pytest.approx(s(a_x) + s(a_z) - s(a_x * a_z), abs=1e-9)
    assert infos["Z"].i_tx.raw == pytest.approx(s(a_z) + s(a_o) - s(a_z * a_o), abs=1e-9)
    assert infos["Z"].h_t == pytest.approx(s(a_z), abs=1e-12)
    # the X row: I(X;X) never exceeds H(X)
    assert infos["X"].i_xt.bits <= infos["X"].h_t + 1e-9
    for li in infos.values():
        assert 0 <= li.i_xt.bits <= math.log2(30) + 1e-6


def test_layer_mi_identity_row_equals_entropy_for_distinct_samples():
    spec = NetworkSpec("ae", (1, 1, 1))
    x = np.arange(25, dtype=float)[:, None] * 40.0
    trace = forward(init_weights(spec, Rng(0)), spec, x)
    row = compute_layer_mi(x, trace)[0]
    assert row.layer == "X"
    assert row.i_xt.bits == pytest.approx(row.h_t, abs=1e-6)


def test_constant_hidden_layers_carry_no_information():
    spec = deep_spec("ae", input_dim=12, hidden=(8,), bottleneck=4)
    params = {k: np.zeros_like(v) for k, v in init_weights(spec, Rng(0)).items()}
    x = Rng(1).uniform((25, 12))
    for li in compute_layer_mi(x, forward(params, spec, x)):
        if li.layer != "X":
            assert li.i_xt.bits == 0.0


# --- training runs -----------------------------------------------------------------

def test_zero_epoch_run_logs_initialization_only(tmp_path, tiny_idx):
    res = run_training(small_config(tmp_path, tiny_idx, epochs=0))
    assert {r.iteration for r in res.trajectory} == {0}
    assert [r.layer for r in res.trajectory] == ["X", "Z", "X'"]
    assert res.manifest["status"] == "complete"


def test_run_artifacts_and_log_schedule(tmp_path, tiny_idx):
    cfg = small_config(tmp_path, tiny_idx, epochs=3, log_every=5)
    res = run_training(cfg)
    out = tmp_path / "run"
    # 300 samples / 50 per batch = 6 iterations per epoch, 18 total
    assert sorted(snapshots(res.trajectory)) == [0, 5, 10, 15, 18]
    assert read_trajectory(out / "trajectory.csv") == res.trajectory
    assert len(read_dpi(out / "dpi.csv")) == 0  # shallow chains have no adjacent pairs
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["spec"]["layer_dims"] == [784, 16, 784]
    assert set(manifest["dataset_sha256"]) == {"train_images", "train_labels", "test_images", "test_labels"}
    assert manifest["iterations"] == 18 and manifest["n_train"] == 300
    spec, params, meta = load_checkpoint(out / "checkpoint.bin")
    assert spec == cfg.spec and meta["iteration"] == 18
    assert all(np.array_equal(params[k], res.params[k]) for k in params)
    last = [r for r in res.trajectory if r.iteration == 18]
    assert last[0].epoch == 3.0
    for r in res.trajectory:
        assert 0 <= r.I_XT_bits <= math.log2(40) + 1e-6
        assert 0 <= r.I_TX_bits <= math.log2(40) + 1e-6


def test_same_seed_gives_identical_csv_bytes(tmp_path, tiny_idx):
    a = run_training(small_config(tmp_path / "a", tiny_idx, variant="vae", dims=(784, 12, 6, 12, 784)))
    b = run_training(small_config(tmp_path / "b", tiny_idx, variant="vae", dims=(784, 12, 6, 12, 784)))
    for name in ("trajectory.csv", "dpi.csv", "checkpoint.bin"):
        assert (a.out_dir / name).read_bytes() == (b.out_dir / name).read_bytes()
    c = run_training(small_config(tmp_path / "c", tiny_idx, variant="vae",
                                  dims=(784, 12, 6, 12, 784), seed=1))
    assert (a.out_dir / "trajectory.csv").read_bytes() != (c.out_dir / "trajectory.csv").read_bytes()


def test_manifest_rerun_is_bit_identical(tmp_path, tiny_idx):
    a = run_training(small_config(tmp_path, tiny_idx, variant="lae", dims=(784, 10, 784)))
    manifest = json.loads((a.out_dir / "manifest.json").read_text())
    b = run_training(rerun_config(manifest, tmp_path / "again"))
    assert (a.out_dir / "trajectory.csv").read_bytes() == (b.out_dir / "trajectory.csv").read_bytes()


def test_vae_bottleneck_pairs_are_excluded(tmp_path, tiny_idx):
    res = run_training(small_config(tmp_path, tiny_idx, variant="vae", dims=(784, 12, 6, 12, 784)))
    rows = read_dpi(res.out_dir / "dpi.csv")
    flags = {(r.chain, r.layer_pair): r.violation_flag for r in rows if r.iteration == 0}
    assert flags[("forward", "E1->Z")] == -1 and flags[("backward", "Z->D1")] == -1


def test_non_finite_loss_aborts_with_checkpoint(tmp_path, tiny_idx, monkeypatch):
    real = harness.loss_and_grads
    calls = {"n": 0}

    def flaky(*args, **kw):
        calls["n"] += 1
        out = real(*args, **kw)
        return (float("nan"),) + out[1:] if calls["n"] == 3 else out
    monkeypatch.setattr(harness, "loss_and_grads", flaky)
    with pytest.raises(TrainingAborted, match="iteration 3") as info:
        run_training(small_config(tmp_path, tiny_idx))
    assert info.value.checkpoint is not None and info.value.checkpoint.exists()
    manifest = json.loads((tmp_path / "run" / "manifest.json").read_text())
    assert manifest["status"] == "aborted"


def test_manifest_is_written_before_compute(tmp_path, tiny_idx, monkeypatch):
    seen = {}

    def boom(*a, **k):
        seen["manifest"] = (tmp_path / "run" / "manifest.json").exists()
        raise RuntimeError("stop")
    monkeypatch.setattr(harness, "load_idx", boom)
    with pytest.raises(RuntimeError):
        run_training(small_config(tmp_path, tiny_idx))
    assert seen["manifest"]


def test_config_validation(tmp_path, tiny_idx):
    with pytest.raises(ValueError, match="log_every"):
        small_config(tmp_path, tiny_idx, log_every=0)
    with pytest.raises(ValueError, match="probe_size"):
        run_training(small_config(tmp_path, tiny_idx, probe_size=301))
    cfg = small_config(tmp_path, tiny_idx)
    assert RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


# --- artifact files ---------------------------------------------------------------

def test_trajectory_reader_reports_line_numbers(tmp_path):
    path = tmp_path / "t.csv"
    log = CsvLog(path, TRAJECTORY_COLUMNS)
    log.write([rec("Z", 1.0, 0.5), rec("X'", 0.5, 0.4)])
    log.close()
    assert len(read_trajectory(path)) == 2
    lines = path.read_text().splitlines()
    lines[2] = lines[2].replace("0.5", "abc", 1)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ArtifactError, match=r"t\.csv:3:"):
        read_trajectory(path)
    path.write_text("\n".join(lines[:2] + ["1,2,3"]) + "\n")
    with pytest.raises(ArtifactError, match=r":3: expected 10 fields"):
        read_trajectory(path)
    with pytest.raises(ArtifactError, match="not found"):
        read_trajectory(tmp_path / "missing.csv")


def test_checkpoint_round_trip_and_corruption(tmp_path):
    spec = shallow_spec("tae", input_dim=6, bottleneck=2)
    params = init_weights(spec, Rng(0))
    path = tmp_path / "c.bin"
    save_checkpoint(path, spec, params, {"iteration": 7})
    spec2, params2, meta = load_checkpoint(path)
    assert spec2 == spec and meta == {"iteration": 7}
    assert all(np.array_equal(params[k], params2[k]) for k in params)
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(ArtifactError, match="truncated"):
        load_checkpoint(path)
    path.write_bytes(raw + b"\0")
    with pytest.raises(ArtifactError, match="trailing"):
        load_checkpoint(path)
    path.write_bytes(b"NOTACKPT" + raw[8:])
    with pytest.raises(ArtifactError, match="magic"):
        load_checkpoint(path)
