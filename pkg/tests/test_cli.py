import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from distdetect import cli, experiments, metrics, verify
from distdetect.hypothesis_model import read_dataset

TINY = ["--T", "600", "--batch-size", "200", "--epochs", "4", "--lr", "3e-3", "--trials", "3000", "--k-list", "3,6", "--snr-list=-5,0"]


def run(tmp_path, *args):
    return cli.main([*args, "--out-dir", str(tmp_path), *TINY])


def files(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipe")
    for cmd in ("gen-data", "train", "baseline", "sweep"):
        assert run(root, cmd) == 0
    return root


def test_gen_data_rows(tmp_path):
    assert cli.main(["gen-data", "--out-dir", str(tmp_path), "--T", "1234", "--seed", "42"]) == 0
    ds = read_dataset(tmp_path / "data" / "snr_0")
    assert ds.T == 1234
    lines = (tmp_path / "data" / "snr_0" / "dataset.csv").read_text().splitlines()
    assert lines[0] == "t,x_h0,x_h1" and len(lines) == 1235
    manifest = json.loads((tmp_path / "data" / "snr_0" / "manifest.json").read_text())
    assert set(manifest) >= {"seed", "sigma", "T", "mean0", "mean1"}
    snapshot = json.loads((tmp_path / "run.json").read_text())
    assert snapshot["command"] == "gen-data" and snapshot["config"]["T"] == 1234


def test_gen_data_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert cli.main(["gen-data", "--out-dir", str(d), "--T", "300", "--snr-list=-5,0,3"]) == 0
    fa, fb = files(a / "data"), files(b / "data")
    assert fa == fb and len(fa) == 6


def test_snr_gets_its_own_dataset(tmp_path):
    assert cli.main(["gen-data", "--out-dir", str(tmp_path), "--T", "50", "--snr-list=-5,0"]) == 0
    a = read_dataset(tmp_path / "data" / "snr_-5")
    b = read_dataset(tmp_path / "data" / "snr_0")
    assert a.seed != b.seed and a.sigma > b.sigma


@pytest.mark.parametrize("bad", [["--T", "0"], ["--epochs", "0"], ["--trials", "0"], ["--lr", "-1"]])
def test_usage_errors(tmp_path, bad, capsys):
    assert cli.main(["gen-data", "--out-dir", str(tmp_path), *bad]) == 2
    assert "usage" in capsys.readouterr().err


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"T": 10, "bogus": 1}))
    assert cli.main(["gen-data", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 2


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"T": 10, "seed": 5, "snr_list": [3.0]}))
    assert cli.main(["gen-data", "--config", str(cfg), "--out-dir", str(tmp_path), "--T", "20"]) == 0
    ds = read_dataset(tmp_path / "data" / "snr_3")
    assert ds.T == 20


def test_train_without_data_fails(tmp_path):
    assert run(tmp_path, "train") == 1


def test_sweep_without_checkpoints_fails(tmp_path):
    assert run(tmp_path, "sweep") == 1


def test_train_outputs(pipeline):
    for snr in ("snr_-5", "snr_0"):
        t = pipeline / "train" / snr
        for name in ("controller.json", "detector_K3.json", "detector_K6.json"):
            assert (t / name).exists()
        for name in ("loss_controller.csv", "loss_detector_K3.csv", "loss_detector_K6.csv"):
            lines = (t / name).read_text().splitlines()
            assert lines[0] == "epoch,loss,stage" and len(lines) == 1 + 4


def test_checkpoint_format(pipeline):
    d = json.loads((pipeline / "train" / "snr_0" / "controller.json").read_text())
    assert d["layer_sizes"] == [1, 20, 20, 20, 1] and d["head"] == "sigmoid"
    assert {"weights", "biases", "init_seed", "train_seed"} <= set(d)
    d = json.loads((pipeline / "train" / "snr_0" / "detector_K6.json").read_text())
    assert d["layer_sizes"] == [1, 30, 30, 30, 2] and d["head"] == "softmax"


def test_sweep_csv(pipeline):
    lines = (pipeline / "sweep.csv").read_text().splitlines()
    assert lines[0] == "K,snr_db,detector,controller,error_rate,ci,trials,seed"
    rows = experiments.read_sweep(pipeline / "sweep.csv")
    assert len(rows) == 2 * 2 * 4
    assert {(r["detector"], r["controller"]) for r in rows} == {
        ("neural", "neural"),
        ("oracle", "threshold"),
        ("closed-form", "threshold"),
        ("closed-form", "neural"),
    }
    for r in rows:
        assert 0 <= r["error_rate"] <= 1
    assert (pipeline / "sweep_timing.csv").exists()


def test_sweep_closed_form_matches_baseline_file(pipeline):
    b = json.loads((pipeline / "baseline" / "snr_0.json").read_text())
    rows = [r for r in experiments.read_sweep(pipeline / "sweep.csv") if r["detector"] == "closed-form" and r["controller"] == "threshold" and r["snr_db"] == 0]
    for r in rows:
        assert r["error_rate"] == metrics.mapdep_binary((0.5, 0.5), (b["gamma0"], b["gamma1"]), r["K"])


def test_baseline_file(pipeline):
    b = json.loads((pipeline / "baseline" / "snr_0.json").read_text())
    assert abs(b["tau_star"]) < 1e-6 and abs(b["gamma0"] - 0.158655) < 1e-6


def test_report(pipeline, capsys):
    assert run(pipeline, "report") == 0
    out = capsys.readouterr().out
    assert "controller loss" in out and "closed-form" in out


def test_train_and_sweep_rerun_identical(pipeline, tmp_path):
    before = {k: v for k, v in files(pipeline).items() if k not in ("sweep_timing.csv", "run.json")}
    copy = tmp_path / "copy"
    shutil.copytree(pipeline / "data", copy / "data")
    assert run(copy, "train") == 0
    assert run(copy, "baseline") == 0
    assert run(copy, "sweep") == 0
    after = {k: v for k, v in files(copy).items() if k not in ("sweep_timing.csv", "run.json")}
    assert before == after


def test_resume_is_bit_identical(pipeline, tmp_path):
    shutil.copytree(pipeline / "data", tmp_path / "data")
    assert cli.main(["train", "--stop-after", "2", "--out-dir", str(tmp_path), *TINY]) == 0
    assert not (tmp_path / "train" / "snr_0" / "controller.json").exists()
    state = json.loads((tmp_path / "train" / "snr_0" / "controller_state.json").read_text())
    assert state["epoch"] == 2
    assert cli.main(["train", "--resume", "--out-dir", str(tmp_path), *TINY]) == 0
    want = files(pipeline / "train")
    got = files(tmp_path / "train")
    assert want == got


def test_workers_do_not_change_results(pipeline, tmp_path):
    shutil.copytree(pipeline / "data", tmp_path / "data")
    shutil.copytree(pipeline / "train", tmp_path / "train")
    shutil.copytree(pipeline / "baseline", tmp_path / "baseline")
    assert cli.main(["sweep", "--workers", "2", "--out-dir", str(tmp_path), *TINY]) == 0
    assert (tmp_path / "sweep.csv").read_bytes() == (pipeline / "sweep.csv").read_bytes()


def test_verify_passes(capsys):
    assert cli.main(["verify"]) == 0
    out = capsys.readouterr().out.splitlines()
    checks = [l for l in out if l.startswith(("PASS", "FAIL"))]
    assert len(checks) == len(verify.CHECKS)
    assert all(l.startswith("PASS") and "max deviation" in l for l in checks)


def test_verify_catches_corrupted_exponent(monkeypatch, capsys):
    real = metrics.mapdep_binary

    def corrupted(priors, gammas, K):
        # wrong exponent on the (1 - gamma) factor
        g0, g1 = gammas
        k = np.arange(K + 1)
        c = np.array([np.exp(metrics.log_binomial(K, i)) for i in k])
        a0 = priors[0] * c * g0**k * (1 - g0) ** (K - k + 1)
        a1 = priors[1] * c * g1**k * (1 - g1) ** (K - k + 1)
        return float(np.minimum(a0, a1).sum())

    monkeypatch.setattr(metrics, "mapdep_binary", corrupted)
    assert cli.main(["verify"]) == 1
    assert "FAIL" in capsys.readouterr().out
    monkeypatch.setattr(metrics, "mapdep_binary", real)


def test_entry_point_runs():
    r = subprocess.run([sys.executable, "-m", "distdetect.cli", "gen-data", "--T", "0"], capture_output=True, text=True)
    assert r.returncode == 2
    r = subprocess.run([sys.executable, "-m", "distdetect.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "sweep" in r.stdout
