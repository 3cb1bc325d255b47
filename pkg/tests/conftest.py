"""Shared fixtures.  Trained models are session-scoped because they cost ~1 min each."""

import time
from pathlib import Path
from types import SimpleNamespace

import pytest

from aiglab.config import RunConfig
from aiglab.experiment import prepare_models, run_sweep

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
FIXTURES = Path(__file__).resolve().parent / "fixtures"

_ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def acceptance():
    def record(n, ok, detail=""):
        _ACCEPTANCE.append((n, bool(ok), detail))
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        return bool(ok)

    return record


@pytest.fixture(scope="session")
def toy_cfg(tmp_path_factory):
    out = tmp_path_factory.mktemp("toy")
    return RunConfig.from_file(CONFIGS / "toy1d.cfg", **{"output.dir": str(out)})


@pytest.fixture(scope="session")
def toy_models(toy_cfg):
    """1D toy: base net (20k DSM steps) and its unregularized DRaFT-1 finetune."""
    t0 = time.perf_counter()
    models = prepare_models(toy_cfg)
    models.elapsed = time.perf_counter() - t0
    return models


@pytest.fixture(scope="session")
def pinned_cfg(tmp_path_factory):
    out = tmp_path_factory.mktemp("pinned_a")
    return RunConfig.from_file(CONFIGS / "pinned_sweep.cfg", **{"output.dir": str(out)})


@pytest.fixture(scope="session")
def pinned_run(pinned_cfg):
    t0 = time.perf_counter()
    models = prepare_models(pinned_cfg)
    table = run_sweep(pinned_cfg, models)
    return SimpleNamespace(cfg=pinned_cfg, models=models, table=table, elapsed=time.perf_counter() - t0)


@pytest.fixture(scope="session")
def pinned_lora_table(pinned_run, tmp_path_factory):
    cfg = RunConfig.from_file(CONFIGS / "pinned_lora.cfg",
                              **{"output.dir": str(tmp_path_factory.mktemp("pinned_lora"))})
    t0 = time.perf_counter()
    table = run_sweep(cfg, pinned_run.models)
    return SimpleNamespace(cfg=cfg, table=table, elapsed=time.perf_counter() - t0)
