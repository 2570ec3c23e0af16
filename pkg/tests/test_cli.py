import json
import os
import subprocess
import sys

import pytest

from adaligner.cli import main, parse_seeds
from adaligner.formats import read_telemetry
from adaligner.runs import read_sweep

FAST = "max_epochs = 2\nlearning_rate = 0.001\nn_nodes = 60\nn_classes = 3\np_intra = 0.2\n"


@pytest.fixture
def cfg(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(FAST)
    return str(path)


def test_parse_seeds():
    assert parse_seeds("0-3,7") == [0, 1, 2, 3, 7]
    assert parse_seeds("5") == [5]


def test_generate_summary_and_determinism(tmp_path, capsys):
    a, b = tmp_path / "a.tag", tmp_path / "b.tag"
    assert main(["generate", "--seed", "0", "--out", str(a)]) == 0
    assert "noisy: 0" in capsys.readouterr().out
    assert main(["generate", "--seed", "0", "--noise-rate", "0.3", "--out", str(b)]) == 0
    assert "noisy: 54" in capsys.readouterr().out
    c = tmp_path / "c.tag"
    main(["generate", "--seed", "0", "--noise-rate", "0.3", "--out", str(c)])
    assert b.read_bytes() == c.read_bytes()


def test_generate_bad_config(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("nodes = 3\n")
    assert main(["generate", "--config", str(bad), "--out", str(tmp_path / "x.tag")]) != 0
    assert "unknown config key" in capsys.readouterr().err


def test_generate_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["generate", "--out", str(blocker / "sub" / "x.tag")]) != 0


def test_train_writes_run_directory(tmp_path, cfg):
    out = tmp_path / "run"
    assert main(["train", "--config", cfg, "--seed", "1", "--out", str(out)]) == 0
    for name in ("telemetry.csv", "epochs.csv", "drops.csv", "eval.json", "eval_init.json", "validation.json",
                 "checkpoint_init.txt", "checkpoint_best.txt", "checkpoint_final.txt", "config.cfg"):
        assert (out / name).is_file(), name
    ev = json.loads((out / "eval.json").read_text())
    assert ev["seed"] == 1 and "accuracy" in ev["metrics"]
    first = (out / "telemetry.csv").read_bytes()
    assert main(["train", "--config", cfg, "--seed", "1", "--out", str(out)]) == 0
    assert (out / "telemetry.csv").read_bytes() == first
    assert (out / "eval.json").read_bytes() == json.dumps(ev, indent=2, sort_keys=True).encode() + b"\n"


def test_train_mode_presets(tmp_path, cfg):
    out = tmp_path / "clip"
    assert main(["train", "--config", cfg, "--mode", "clip_only", "--out", str(out)]) == 0
    rows = read_telemetry(out / "telemetry.csv")
    assert {(r["beta"], r["gamma"]) for r in rows} == {(0.0, 0.0)}
    out = tmp_path / "fixed"
    assert main(["train", "--config", cfg, "--fixed-theta", "1.0", "--out", str(out)]) == 0
    assert {r["theta"] for r in read_telemetry(out / "telemetry.csv")} == {1.0}


def test_train_missing_dataset(tmp_path, cfg):
    path = tmp_path / "d.cfg"
    path.write_text(FAST + f"dataset = {tmp_path / 'missing.tag'}\n")
    assert main(["train", "--config", str(path), "--out", str(tmp_path / "r")]) != 0


def test_train_from_dataset_file(tmp_path, cfg):
    data = tmp_path / "d.tag"
    main(["generate", "--config", cfg, "--seed", "2", "--out", str(data)])
    path = tmp_path / "d.cfg"
    path.write_text(FAST + f"dataset = {data}\n")
    assert main(["train", "--config", str(path), "--out", str(tmp_path / "r")]) == 0


def test_sweep_rows_and_layout(tmp_path, cfg):
    out = tmp_path / "sw"
    assert main(["sweep", "--config", cfg, "--axis", "alpha", "--values", "0.1,0.7,1.5", "--seeds", "0-2",
                 "--out", str(out)]) == 0
    rows = read_sweep(out / "sweep.csv")
    assert len(rows) == 9
    assert [(r["value"], r["seed"]) for r in rows[:3]] == [("0.1", "0"), ("0.1", "1"), ("0.1", "2")]
    assert (out / "alpha=0.7" / "seed=1" / "telemetry.csv").is_file()


def test_sweep_fixed_theta_and_parallel(tmp_path, cfg):
    out = tmp_path / "ft"
    assert main(["sweep", "--config", cfg, "--axis", "fixed_theta", "--values", "0.9,1.0,1.1", "--seeds", "0,1",
                 "--noise-rate", "0.3", "--jobs", "2", "--out", str(out)]) == 0
    rows = read_sweep(out / "sweep.csv")
    assert sorted({r["value"] for r in rows}) == ["0.9", "1.0", "1.1"]
    thetas = {r["theta"] for r in read_telemetry(out / "fixed_theta=1.1" / "seed=0" / "telemetry.csv")}
    assert thetas == {1.1}
    serial = tmp_path / "ft1"
    main(["sweep", "--config", cfg, "--axis", "fixed_theta", "--values", "0.9,1.0,1.1", "--seeds", "0,1",
          "--noise-rate", "0.3", "--out", str(serial)])
    assert (serial / "sweep.csv").read_bytes() == (out / "sweep.csv").read_bytes()


def test_sweep_unknown_axis(tmp_path, cfg, capsys):
    assert main(["sweep", "--config", cfg, "--axis", "alpah", "--values", "1", "--out", str(tmp_path)]) != 0
    err = capsys.readouterr().err
    assert "valid keys" in err and "alpha" in err


def test_eval_checkpoint(tmp_path, cfg, capsys):
    out = tmp_path / "run"
    main(["train", "--config", cfg, "--out", str(out)])
    target = tmp_path / "ev.json"
    assert main(["eval", "--config", cfg, "--checkpoint", str(out / "checkpoint_best.txt"),
                 "--out", str(target)]) == 0
    again = json.loads(target.read_text())["metrics"]
    assert again == json.loads((out / "eval.json").read_text())["metrics"]


def test_gradcheck_command(capsys):
    assert main(["gradcheck", "--seeds", "0-2"]) == 0
    assert "PASS" in capsys.readouterr().out


def test_module_entry_point_and_log_env(tmp_path, cfg):
    env = dict(os.environ, ADALIGNER_LOG="debug")
    proc = subprocess.run([sys.executable, "-m", "adaligner", "train", "--config", cfg, "--out", str(tmp_path / "r")],
                          capture_output=True, text=True, env=env)
    assert proc.returncode == 0
    assert "DEBUG adaligner.trainer: epoch 0" in proc.stderr
    env["ADALIGNER_LOG"] = "warning"
    proc = subprocess.run([sys.executable, "-m", "adaligner", "train", "--config", cfg, "--out", str(tmp_path / "r")],
                          capture_output=True, text=True, env=env)
    assert "DEBUG" not in proc.stderr
