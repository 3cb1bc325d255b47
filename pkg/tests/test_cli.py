import json
import subprocess
import sys

import numpy as np
import pytest

from aiglab.cli import main
from aiglab.diffusion import SampleSet
from aiglab.experiment import RESULTS_HEADER

TINY = """
seed = 1
net.hidden = 8,8
train.steps = 30
train.batch_size = 32
finetune.steps = 3
finetune.batch_size = 16
samples.n = 60
regularizer = lora_scale
lora.alpha = 0.5,1.0
"""


@pytest.fixture
def tiny_cfg(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY)
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_train_finetune_sweep_pareto(tmp_path, tiny_cfg, capsys):
    out = tmp_path / "run"
    code, stdout, _ = run(capsys, "train", "--config", tiny_cfg, "--out", out)
    assert code == 0 and json.loads(stdout)["ok"]
    assert (out / "base.ckpt").exists() and (out / "train_loss.csv").exists()

    code, stdout, _ = run(capsys, "finetune", "--config", tiny_cfg, "--out", out)
    assert code == 0 and (out / "draft.ckpt").exists()
    trace = (out / "finetune_trace.csv").read_text().splitlines()
    assert trace[0] == "iteration,reward,kl_surrogate" and len(trace) == 4

    code, stdout, _ = run(capsys, "sweep", "--config", tiny_cfg, "--out", out, "--base", out / "base.ckpt")
    assert code == 0 and json.loads(stdout)["rows"] == 2
    lines = (out / "results.csv").read_text().splitlines()
    assert lines[0] == RESULTS_HEADER and len(lines) == 3

    code, stdout, _ = run(capsys, "pareto", out / "results.csv")
    assert code == 0
    assert set(json.loads(stdout)["fronts"]) == {"fid", "1-recall", "scd", "lscd"}
    assert (out / "pareto_lscd.csv").exists()


def test_seed_override_changes_results(tmp_path, tiny_cfg, capsys):
    for seed in (1, 2):
        assert run(capsys, "sweep", "--config", tiny_cfg, "--out", tmp_path / str(seed), "--seed", seed)[0] == 0
    a = (tmp_path / "1" / "results.csv").read_text()
    b = (tmp_path / "2" / "results.csv").read_text()
    assert a != b


def test_metrics_verb(tmp_path, capsys):
    rng = np.random.default_rng(0)
    SampleSet(rng.normal(size=(50, 2)), origin="base").save(tmp_path / "a.csv")
    SampleSet(rng.normal(size=(50, 2)) + 10, origin="aig").save(tmp_path / "b.csv")
    code, stdout, _ = run(capsys, "metrics", tmp_path / "a.csv", tmp_path / "a.csv")
    rep = json.loads(stdout)
    assert code == 0 and rep["recall"] == 1.0 and rep["fid"] <= 1e-8
    code, stdout, _ = run(capsys, "metrics", tmp_path / "a.csv", tmp_path / "b.csv", "-k", "5")
    assert json.loads(stdout)["recall"] == 0.0


def test_toyfig_defaults_to_1d_preset(tmp_path, capsys):
    cfg = tmp_path / "toy.cfg"
    cfg.write_text("toy.chains = 200\ntoy.langevin_times = 100,900\n")
    code, stdout, _ = run(capsys, "toyfig", "--out", tmp_path / "nocfg_small", "--config", cfg)
    # an explicit config without 1D keys falls back to the 2D defaults and is rejected
    assert code == 2
    code, stdout, _ = run(capsys, "toyfig", "--out", tmp_path / "fig")
    assert code == 0 and (tmp_path / "fig" / "toy_terminal.csv").exists()
    assert json.loads(stdout)["overlap"]["1000"] > 0.4


def test_errors_are_machine_readable(tmp_path, capsys):
    code, _, err = run(capsys, "sweep", "--config", tmp_path / "missing.cfg")
    assert code == 2
    info = json.loads(err.strip().splitlines()[-1])
    assert info["error"] == "FileNotFoundError"
    bad = tmp_path / "bad.cfg"
    bad.write_text("regularizer = dropout\n")
    code, _, err = run(capsys, "sweep", "--config", bad)
    assert code == 2 and "regularizer" in json.loads(err)["message"]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "aiglab", "pareto", str(tmp_path / "none.csv")],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert json.loads(proc.stderr)["error"] == "FileNotFoundError"
    proc = subprocess.run([sys.executable, "-m", "aiglab", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for verb in ("train", "finetune", "sweep", "toyfig", "pareto", "metrics"):
        assert verb in proc.stdout
